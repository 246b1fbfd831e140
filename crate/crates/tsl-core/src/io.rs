//! TBRG1 binary grids and CSV export.
//!
//! Layout: magic `TBRG1\0`, u32 dimension, per axis f64 origin, f64 spacing,
//! u64 count, u32 component count `m`, then `len·m` little-endian f64 values
//! (row-major, components interleaved).

use crate::error::{Result, TslError};
use crate::grid::{Axis, UniformGrid};
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use std::io::{Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 6] = b"TBRG1\0";

pub fn write_tbrg1<W: Write>(mut w: W, grid: &UniformGrid, m: usize, values: &[f64]) -> Result<()> {
    if values.len() != grid.len() * m {
        return Err(TslError::Format(format!(
            "expected {} values, got {}",
            grid.len() * m,
            values.len()
        )));
    }
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(grid.dim() as u32)?;
    for a in grid.axes() {
        w.write_f64::<LittleEndian>(a.origin)?;
        w.write_f64::<LittleEndian>(a.spacing)?;
        w.write_u64::<LittleEndian>(a.count as u64)?;
    }
    w.write_u32::<LittleEndian>(m as u32)?;
    for v in values {
        w.write_f64::<LittleEndian>(*v)?;
    }
    Ok(())
}

pub fn read_tbrg1<R: Read>(mut r: R) -> Result<(UniformGrid, usize, Vec<f64>)> {
    let mut magic = [0u8; 6];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(TslError::Format("bad magic, not a TBRG1 file".into()));
    }
    let dim = r.read_u32::<LittleEndian>()? as usize;
    if dim == 0 || dim > 2 {
        return Err(TslError::Format(format!("unsupported dimension {dim}")));
    }
    let mut axes = Vec::with_capacity(dim);
    for _ in 0..dim {
        let origin = r.read_f64::<LittleEndian>()?;
        let spacing = r.read_f64::<LittleEndian>()?;
        let count = r.read_u64::<LittleEndian>()? as usize;
        axes.push(Axis::new(origin, spacing, count)?);
    }
    let grid = UniformGrid::new(axes)?;
    let m = r.read_u32::<LittleEndian>()? as usize;
    if m == 0 {
        return Err(TslError::Format("component count must be positive".into()));
    }
    let mut values = vec![0.0; grid.len() * m];
    r.read_f64_into::<LittleEndian>(&mut values)
        .map_err(|e| TslError::Format(format!("truncated payload: {e}")))?;
    Ok((grid, m, values))
}

pub fn save_tbrg1(path: &Path, grid: &UniformGrid, m: usize, values: &[f64]) -> Result<()> {
    let f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_tbrg1(f, grid, m, values)
}

pub fn load_tbrg1(path: &Path) -> Result<(UniformGrid, usize, Vec<f64>)> {
    let f = std::fs::File::open(path).map_err(|e| TslError::Io(format!("{}: {e}", path.display())))?;
    read_tbrg1(std::io::BufReader::new(f))
}

/// One row per grid point: coordinates, then the `m` components.
pub fn write_grid_csv<W: Write>(w: W, grid: &UniformGrid, m: usize, values: &[f64], names: &[&str]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let mut header: Vec<String> = (0..grid.dim()).map(|i| format!("x{i}")).collect();
    for c in 0..m {
        header.push(names.get(c).map(|s| s.to_string()).unwrap_or(format!("v{c}")));
    }
    wr.write_record(&header).map_err(|e| TslError::Io(e.to_string()))?;
    for i in 0..grid.len() {
        let mut row: Vec<String> = grid.point(i).iter().map(|x| format!("{x:.17e}")).collect();
        for c in 0..m {
            row.push(format!("{:.17e}", values[i * m + c]));
        }
        wr.write_record(&row).map_err(|e| TslError::Io(e.to_string()))?;
    }
    wr.flush()?;
    Ok(())
}

/// Generic table writer used for per-scale and per-(k,l) reports.
pub fn write_table_csv<W: Write>(w: W, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(header).map_err(|e| TslError::Io(e.to_string()))?;
    for r in rows {
        wr.write_record(r.iter().map(|v| format!("{v:.17e}")))
            .map_err(|e| TslError::Io(e.to_string()))?;
    }
    wr.flush()?;
    Ok(())
}
