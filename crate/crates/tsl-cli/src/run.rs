//! Pipeline execution and the run manifest.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};
use tsl_core::class_estimates::{tauberian_verdict, VerdictOptions};
use tsl_core::io::{read_tbrg1, write_table_csv};
use tsl_core::kernels::{analyze, catalog, save_kernel, Kernel, KernelParams};
use tsl_core::pde_examples::{heat_as_regularization, laplace_batch, laplace_cr_residual, Symbol};
use tsl_core::regvar_besov::{
    besov_equivalence, besov_norm, rv_properties_check, BesovOptions, LPPair, RVFunctional, RegVarWeight,
};
use tsl_core::signals::{ComponentNorm, Signal};
use tsl_core::synthesis::{reconstruct, reconstruction_wavelet, Annulus};
use tsl_core::transform::{regularize, slow_growth_fit, wavelet_transform};
use tsl_core::{EdgeCheck, ScaleLadder, UniformGrid};

use crate::config::{Config, GridSpec, KernelDesc, KernelRef, LadderSpec, Op, PairSpec, SignalRef, SignalSet};
use crate::error::{CliError, EXIT_OK};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Serialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct StepRecord {
    pub name: String,
    pub op: String,
    pub seed: u64,
    pub status: String,
    pub outputs: Vec<FileHash>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub core_version: String,
    pub config_sha256: String,
    pub config: Config,
    pub seed: u64,
    pub inputs: Vec<FileHash>,
    pub steps: Vec<StepRecord>,
    pub exit_code: i32,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Loads a config file and runs it; relative paths resolve against the file's directory.
pub fn run_config_file(path: &Path) -> Result<Manifest, CliError> {
    let (cfg, bytes) = Config::load(path)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    run_pipeline(cfg, &base, &bytes)
}

/// Runs every step in order and writes `manifest.json`, also when a step fails.
pub fn run_pipeline(cfg: Config, base: &Path, config_bytes: &[u8]) -> Result<Manifest, CliError> {
    cfg.validate()?;
    let out = resolve(base, &cfg.output_dir);
    std::fs::create_dir_all(&out).map_err(|e| CliError::config(format!("{}: {e}", out.display())))?;
    let mut ctx = Context { base: base.to_path_buf(), out: out.clone(), inputs: BTreeMap::new() };
    let mut steps = Vec::new();
    let mut failure = None;
    for (i, step) in cfg.steps.iter().enumerate() {
        let name = step.name(i);
        let seed = step.seed.unwrap_or(cfg.seed.wrapping_add(i as u64));
        let mut outputs = Vec::new();
        let result = ctx.execute(&name, &step.op, seed, &mut outputs);
        let mut rec = StepRecord {
            name: name.clone(),
            op: step.op.label().to_string(),
            seed,
            status: "ok".into(),
            outputs: outputs.iter().map(|p| ctx.hash_output(p)).collect::<Result<_, _>>()?,
            error: None,
        };
        if let Err(e) = result {
            let e = e.in_step(&name);
            rec.status = "failed".into();
            rec.error = Some(e.to_string());
            steps.push(rec);
            failure = Some(e);
            break;
        }
        steps.push(rec);
    }
    let manifest = Manifest {
        tool: "tsl".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        core_version: tsl_core::VERSION.into(),
        config_sha256: sha256_hex(config_bytes),
        seed: cfg.seed,
        config: cfg,
        inputs: ctx.inputs.into_iter().map(|(path, sha256)| FileHash { path, sha256 }).collect(),
        steps,
        exit_code: failure.as_ref().map_or(EXIT_OK, |e| e.code),
    };
    std::fs::write(out.join(MANIFEST), to_json(&manifest)?)?;
    match failure {
        Some(e) => Err(e),
        None => Ok(manifest),
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn to_json<T: Serialize>(v: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(v).map_err(|e| CliError::config(e.to_string()))
}

fn rows_csv(header: &[&str], rows: &[Vec<f64>]) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    write_table_csv(&mut buf, header, rows)?;
    Ok(buf)
}

struct Context {
    base: PathBuf,
    out: PathBuf,
    /// Input path → SHA-256.
    inputs: BTreeMap<String, String>,
}

impl Context {
    fn read_input(&mut self, p: &Path) -> Result<Vec<u8>, CliError> {
        let path = resolve(&self.base, p);
        let bytes = std::fs::read(&path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        self.inputs.insert(p.display().to_string(), sha256_hex(&bytes));
        Ok(bytes)
    }

    fn hash_output(&self, name: &String) -> Result<FileHash, CliError> {
        let bytes = std::fs::read(self.out.join(name))?;
        Ok(FileHash { path: name.clone(), sha256: sha256_hex(&bytes) })
    }

    fn write(&self, outputs: &mut Vec<String>, file: String, bytes: &[u8]) -> Result<(), CliError> {
        std::fs::write(self.out.join(&file), bytes)?;
        outputs.push(file);
        Ok(())
    }

    fn write_json<T: Serialize>(&self, outputs: &mut Vec<String>, file: String, v: &T) -> Result<(), CliError> {
        self.write(outputs, file, to_json(v)?.as_bytes())
    }

    fn kernel(&mut self, r: &KernelRef) -> Result<Kernel, CliError> {
        let desc = match r {
            KernelRef::Name(n) => return Ok(catalog(n, &KernelParams::default())?),
            KernelRef::Desc(d) => d,
        };
        Ok(match desc {
            KernelDesc::Catalog { name, params } => catalog(name, params)?,
            KernelDesc::Samples { name, path } => {
                let bytes = self.read_input(path)?;
                let (grid, m, vals) = read_tbrg1(&bytes[..])?;
                let spatial: Vec<Complex64> = match m {
                    1 => vals.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
                    2 => vals.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect(),
                    _ => return Err(CliError::config(format!("{}: kernel samples need 1 or 2 components", path.display()))),
                };
                let label = name.clone().unwrap_or_else(|| {
                    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
                });
                Kernel::from_samples(&label, grid, spatial, None, None)?
            }
            KernelDesc::File { path } => {
                let bytes = self.read_input(path)?;
                let inner: KernelRef = serde_json::from_slice(&bytes)
                    .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
                self.kernel(&inner)?
            }
            KernelDesc::Symbol { symbol } => symbol.kernel()?,
            KernelDesc::Reconstruction { phi, inner, outer } => {
                let phi = self.kernel(phi)?;
                reconstruction_wavelet(&phi, &Annulus::new(*inner, *outer))?
            }
        })
    }

    fn signal(&mut self, r: &SignalRef) -> Result<Signal, CliError> {
        let s = match r {
            SignalRef::Inline(s) => s.clone(),
            SignalRef::File { file, payload } => {
                let bytes = self.read_input(file)?;
                let mut s: Signal = serde_json::from_slice(&bytes)
                    .map_err(|e| CliError::config(format!("{}: {e}", file.display())))?;
                if let Some(p) = payload {
                    let bytes = self.read_input(p)?;
                    let (grid, m, vals) = read_tbrg1(&bytes[..])?;
                    if m != s.m {
                        return Err(CliError::config(format!(
                            "{}: payload has {m} components, signal has {}",
                            p.display(),
                            s.m
                        )));
                    }
                    let comps = (0..m).map(|c| vals.iter().skip(c).step_by(m).map(|&v| Complex64::new(v, 0.0)).collect()).collect();
                    s.smooth = Signal::smooth_components(grid, comps, EdgeCheck::default())?.smooth;
                }
                s
            }
        };
        s.validate()?;
        Ok(s)
    }

    fn signal_set(&mut self, set: &SignalSet) -> Result<Vec<Signal>, CliError> {
        match set {
            SignalSet::List(l) => l.iter().map(|r| self.signal(r)).collect(),
            SignalSet::Dir(d) => {
                let dir = resolve(&self.base, d);
                let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
                    .map_err(|e| CliError::config(format!("{}: {e}", dir.display())))?
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| p.extension().is_some_and(|x| x == "json"))
                    .collect();
                files.sort();
                if files.is_empty() {
                    return Err(CliError::config(format!("{}: no signal files", dir.display())));
                }
                files.iter().map(|f| self.signal(&SignalRef::File { file: d.join(f.file_name().unwrap()), payload: None })).collect()
            }
        }
    }

    fn pair(&mut self, p: &PairSpec, order: f64) -> Result<LPPair, CliError> {
        let phi0 = self.kernel(&p.phi0)?;
        let phi = self.kernel(&p.phi)?;
        Ok(LPPair::new(phi0, phi, order)?)
    }

    fn execute(&mut self, name: &str, op: &Op, seed: u64, outputs: &mut Vec<String>) -> Result<(), CliError> {
        match op {
            Op::AnalyzeKernel { kernel, options, save_samples } => {
                let k = self.kernel(kernel)?;
                let report = analyze(&k, options);
                self.write_json(outputs, format!("{name}.json"), &report)?;
                if *save_samples {
                    save_kernel(&k, &report, &self.out.join(format!("{name}-samples")))?;
                    outputs.push(format!("{name}-samples.tbrg"));
                    outputs.push(format!("{name}-samples.json"));
                }
            }
            Op::Transform { signal, kernel, grid, ladder, wavelet, csv } => {
                let f = self.signal(signal)?;
                let k = self.kernel(kernel)?;
                let grid = grid_or(grid, 32.0, 4096)?;
                let ladder = ladder_or(ladder, 0.05, 4.0, 4)?;
                let field =
                    if *wavelet { wavelet_transform(&f, &k, &grid, &ladder)? } else { regularize(&f, &k, &grid, &ladder)? };
                field.save(&self.out.join(name))?;
                outputs.push(format!("{name}.tbrg"));
                outputs.push(format!("{name}.json"));
                self.write_json(outputs, format!("{name}-fit.json"), &slow_growth_fit(&field, ComponentNorm::L2))?;
                if *csv {
                    let (header, rows) = field.csv_rows();
                    let h: Vec<&str> = header.iter().map(String::as_str).collect();
                    self.write(outputs, format!("{name}.csv"), &rows_csv(&h, &rows)?)?;
                }
            }
            Op::Reconstruct { signal, psi, eta, grid, ladder } => {
                let f = self.signal(signal)?;
                let psi = self.kernel(psi)?;
                let eta = match eta {
                    Some(e) => self.kernel(e)?,
                    None => psi.clone(),
                };
                let grid = match (grid, &f.smooth) {
                    (Some(g), _) => g.build()?,
                    (None, Some(s)) => s.grid.clone(),
                    (None, None) => UniformGrid::centered_line(64.0 * PI, 4096)?,
                };
                let ladder = ladder_or(ladder, 0.016, 40.0, 8)?;
                let (rec, report) = reconstruct(&f, &psi, &eta, &grid, &ladder)?;
                self.write_json(outputs, format!("{name}.json"), &report)?;
                let xs = grid.axis(0).points();
                let rows: Vec<Vec<f64>> = xs
                    .iter()
                    .enumerate()
                    .map(|(i, &x)| {
                        let mut r = vec![x];
                        for c in 0..f.m {
                            r.extend([rec[c][i].re, rec[c][i].im]);
                        }
                        r
                    })
                    .collect();
                let mut header = vec!["x".to_string()];
                for c in 0..f.m {
                    header.extend([format!("re{c}"), format!("im{c}")]);
                }
                let h: Vec<&str> = header.iter().map(String::as_str).collect();
                self.write(outputs, format!("{name}.csv"), &rows_csv(&h, &rows)?)?;
            }
            Op::ClassEstimate { signal, kernel, avg_kernel, mode, space, k_max, l_max, grid } => {
                let f = self.signal(signal)?;
                let phi = self.kernel(kernel)?;
                let phi0 = avg_kernel.as_ref().map(|k| self.kernel(k)).transpose()?;
                let mut opts = VerdictOptions::default();
                if let Some(g) = grid {
                    opts.grid = g.build()?;
                }
                opts.k_max = k_max.unwrap_or(opts.k_max);
                opts.l_max = l_max.unwrap_or(opts.l_max);
                let report = tauberian_verdict(&f, &phi, phi0.as_ref(), space.0, *mode, &opts)?;
                self.write_json(outputs, format!("{name}.json"), &report)?;
                let rows: Vec<Vec<f64>> = report
                    .integrals
                    .iter()
                    .map(|e| vec![e.k as f64, e.l as f64, e.value, if e.divergent { 1.0 } else { 0.0 }])
                    .collect();
                self.write(outputs, format!("{name}-integrals.csv"), &rows_csv(&["k", "l", "value", "divergent"], &rows)?)?;
            }
            Op::Besov { signal, pair0, pair, order, p, q, weight, grid, ladder, require_finite } => {
                let f = self.signal(signal)?;
                let lp = self.pair(&PairSpec { phi0: pair0.clone(), phi: pair.clone() }, *order)?;
                let c = weight.clone().unwrap_or_else(|| RegVarWeight::power(*order));
                let opts = besov_options(grid, ladder)?;
                let report = besov_norm(&f, &lp, p.0, q.0, &c, &opts)?;
                self.write_json(outputs, format!("{name}.json"), &report)?;
                self.write(outputs, format!("{name}.csv"), report.csv().as_bytes())?;
                if *require_finite && report.divergent {
                    return Err(CliError::divergent(format!(
                        "Besov norm is infinite: {}",
                        report.reason.as_deref().unwrap_or("divergent")
                    )));
                }
            }
            Op::BesovEquiv { signals, pair_a, pair_b, order, p, q, weight, grid, ladder } => {
                let fs = self.signal_set(signals)?;
                let a = self.pair(pair_a, *order)?;
                let b = self.pair(pair_b, *order)?;
                let c = weight.clone().unwrap_or_else(|| RegVarWeight::power(*order));
                let opts = besov_options(grid, ladder)?;
                let report = besov_equivalence(&fs, &a, &b, p.0, q.0, &c, &opts)?;
                self.write_json(outputs, format!("{name}.json"), &report)?;
            }
            Op::HeatDemo { signal, times, symbol, grid } => {
                let f = self.signal(signal)?;
                let sym = symbol.unwrap_or_else(Symbol::heat);
                let grid = grid_or(grid, 32.0, 4096)?;
                if times.is_empty() {
                    return Err(CliError::config("heat-demo needs at least one time"));
                }
                let results: Vec<_> =
                    times.par_iter().map(|&t| heat_as_regularization(&f, t, &sym, &grid)).collect::<Result<_, _>>()?;
                let mut summary = Vec::new();
                for (i, r) in results.iter().enumerate() {
                    self.write(outputs, format!("{name}-t{i}.csv"), r.csv().as_bytes())?;
                    summary.push(serde_json::json!({
                        "t": r.t, "y": r.y, "discrepancy": r.discrepancy, "peak": r.peak, "passed": r.passed,
                        "csv": format!("{name}-t{i}.csv"),
                    }));
                }
                self.write_json(outputs, format!("{name}.json"), &summary)?;
            }
            Op::LaplaceDemo { signal, points, cr_step } => {
                let h = self.signal(signal)?;
                let pts = points.clone().unwrap_or_else(|| {
                    let xs = [-1.0, -0.5, 0.5, 1.0];
                    let ss = [0.25, 0.5, 1.0, 2.0];
                    xs.iter().flat_map(|&x| ss.iter().map(move |&s| (x, s))).collect()
                });
                let values = laplace_batch(&h, &pts)?;
                let cr = cr_step.map(|s| laplace_cr_residual(&h, &pts, s)).transpose()?;
                self.write_json(outputs, format!("{name}.json"), &serde_json::json!({ "values": values, "cr_residual": cr }))?;
                let rows: Vec<Vec<f64>> = values
                    .iter()
                    .map(|v| vec![v.x, v.sigma, v.direct[0].re, v.direct[0].im, v.transform[0].re, v.transform[0].im, v.discrepancy])
                    .collect();
                let header = ["x", "sigma", "direct_re", "direct_im", "transform_re", "transform_im", "discrepancy"];
                self.write(outputs, format!("{name}.csv"), &rows_csv(&header, &rows)?)?;
            }
            Op::RvProperties { q, weight, trials } => {
                let j = RVFunctional::new(q.0, weight.clone())?;
                let report = rv_properties_check(&j, *trials, seed)?;
                self.write_json(outputs, format!("{name}.json"), &report)?;
            }
        }
        Ok(())
    }
}

fn grid_or(g: &Option<GridSpec>, half_width: f64, points: usize) -> Result<UniformGrid, CliError> {
    match g {
        Some(g) => g.build(),
        None => Ok(UniformGrid::centered_line(half_width, points)?),
    }
}

fn ladder_or(l: &Option<LadderSpec>, y_min: f64, y_max: f64, per_octave: usize) -> Result<ScaleLadder, CliError> {
    match l {
        Some(l) => l.build(),
        None => Ok(ScaleLadder::per_octave(y_min, y_max, per_octave)?),
    }
}

fn besov_options(grid: &Option<GridSpec>, ladder: &Option<LadderSpec>) -> Result<BesovOptions, CliError> {
    let mut opts = BesovOptions::default();
    if let Some(g) = grid {
        opts.grid = g.build()?;
    }
    if let Some(l) = ladder {
        opts.ladder = l.build()?;
    }
    Ok(opts)
}
