//! Test functions in dual representation and the kernel-side analysis:
//! moments, Taylor terms, non-degeneracy, index τ, strong non-degeneracy.

use crate::error::{Result, TslError};
use crate::grid::{
    check_edges, forward_spectrum, interpolate_spectrum, inverse_spectrum, Axis, EdgeCheck, UniformGrid,
};
use crate::numerics::{
    factorial, fornberg_weights, hermite_h, hermite_he, lagrange_equispaced, linear_fit, smooth_transition,
};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::sync::{Arc, OnceLock};

pub type SpectrumFn = Arc<dyn Fn(&[f64]) -> Complex64 + Send + Sync>;
/// `(m, t) ↦ φ^{(m)}(t)` for one-dimensional kernels.
pub type DerivFn = Arc<dyn Fn(usize, f64) -> Complex64 + Send + Sync>;

pub const DEFAULT_MOMENT_CAP: usize = 10;
pub const DEFAULT_N_MAX: usize = 12;
pub const DEFAULT_RAYS: usize = 256;
/// Support threshold relative to max |û|.
pub const SUPPORT_TOL: f64 = 1e-12;
pub const MOMENT_TOL: f64 = 1e-6;
pub const SPECTRAL_EDGE_TOL: f64 = 1e-10;
const FD_HALF_WIDTH: usize = 14;
const FD_STEP: f64 = 0.157;
const MAX_DERIV_ORDER: usize = 12;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Expected analysis results for catalog kernels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub nondegenerate: bool,
    pub tau: Option<f64>,
    pub strong_n: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Moment {
    pub index: Vec<usize>,
    pub re: f64,
    pub im: f64,
}

impl Moment {
    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }
    pub fn order(&self) -> usize {
        self.index.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Disagreement {
    order: usize,
    quadrature: Complex64,
    spectral: Complex64,
}

#[derive(Clone)]
pub struct Kernel {
    name: String,
    grid: UniformGrid,
    spatial: Arc<Vec<Complex64>>,
    spectral: Arc<Vec<Complex64>>,
    spectrum_fn: SpectrumFn,
    deriv_fn: Option<DerivFn>,
    moments: Vec<Moment>,
    resolved: Option<usize>,
    disagreement: Option<Disagreement>,
    truth: Option<GroundTruth>,
}

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Kernel")
            .field("name", &self.name)
            .field("grid", &self.grid)
            .field("moment_cap", &self.resolved)
            .finish()
    }
}

impl Kernel {
    /// Kernel defined by its spectrum; spatial samples are the exact inverse transform.
    pub fn from_spectrum(
        name: &str,
        grid: UniformGrid,
        spectrum: SpectrumFn,
        deriv: Option<DerivFn>,
        spatial_check: EdgeCheck,
    ) -> Result<Kernel> {
        let spectral: Vec<Complex64> = (0..grid.len()).map(|k| spectrum(&grid.frequency(k))).collect();
        check_edges(&grid, |k| spectral[k].norm(), EdgeCheck::Enforce(SPECTRAL_EDGE_TOL))?;
        let spatial = inverse_spectrum(&spectral, &grid);
        check_edges(&grid, |i| spatial[i].norm(), spatial_check)?;
        Ok(Kernel::assemble(name, grid, spatial, spectral, spectrum, deriv))
    }

    /// Kernel with closed forms on both sides; the sampled pair must be mutual transforms.
    pub fn from_pair(
        name: &str,
        grid: UniformGrid,
        spatial_fn: impl Fn(&[f64]) -> Complex64,
        spectrum: SpectrumFn,
        deriv: Option<DerivFn>,
    ) -> Result<Kernel> {
        let spatial: Vec<Complex64> = (0..grid.len()).map(|i| spatial_fn(&grid.point(i))).collect();
        let spectral: Vec<Complex64> = (0..grid.len()).map(|k| spectrum(&grid.frequency(k))).collect();
        check_edges(&grid, |k| spectral[k].norm(), EdgeCheck::Enforce(SPECTRAL_EDGE_TOL))?;
        let fwd = forward_spectrum(&spatial, &grid, EdgeCheck::default())?;
        let scale = max_abs(&spectral);
        let err = fwd.iter().zip(&spectral).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        if err > 1e-10 * scale {
            return Err(TslError::InvalidParameter(format!(
                "spatial and spectral closures disagree by {err:.3e}"
            )));
        }
        Ok(Kernel::assemble(name, grid, spatial, spectral, spectrum, deriv))
    }

    /// Kernel defined by spatial samples. Without a closure the spectrum is
    /// interpolated from its samples.
    pub fn from_samples(
        name: &str,
        grid: UniformGrid,
        spatial: Vec<Complex64>,
        spectrum: Option<SpectrumFn>,
        deriv: Option<DerivFn>,
    ) -> Result<Kernel> {
        let spectral = forward_spectrum(&spatial, &grid, EdgeCheck::default())?;
        check_edges(&grid, |k| spectral[k].norm(), EdgeCheck::Enforce(SPECTRAL_EDGE_TOL))?;
        let spectrum = match spectrum {
            Some(f) => f,
            None => interpolating_spectrum(&grid, &spectral),
        };
        Ok(Kernel::assemble(name, grid, spatial, spectral, spectrum, deriv))
    }

    pub fn from_real_samples(name: &str, grid: UniformGrid, spatial: &[f64]) -> Result<Kernel> {
        let c = spatial.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        Kernel::from_samples(name, grid, c, None, None)
    }

    fn assemble(
        name: &str,
        grid: UniformGrid,
        spatial: Vec<Complex64>,
        spectral: Vec<Complex64>,
        spectrum_fn: SpectrumFn,
        deriv_fn: Option<DerivFn>,
    ) -> Kernel {
        let deriv_fn = match (deriv_fn, grid.dim()) {
            (Some(d), _) => Some(d),
            (None, 1) => Some(table_derivatives(&grid, &spectral)),
            _ => None,
        };
        let (moments, resolved, disagreement) = compute_moments(&grid, &spatial, &spectral, DEFAULT_MOMENT_CAP);
        Kernel {
            name: name.to_string(),
            grid,
            spatial: Arc::new(spatial),
            spectral: Arc::new(spectral),
            spectrum_fn,
            deriv_fn,
            moments,
            resolved,
            disagreement,
            truth: None,
        }
    }

    pub fn with_truth(mut self, truth: GroundTruth) -> Kernel {
        self.truth = Some(truth);
        self
    }

    pub fn renamed(mut self, name: &str) -> Kernel {
        self.name = name.to_string();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }
    pub fn dim(&self) -> usize {
        self.grid.dim()
    }
    pub fn spatial(&self) -> &[Complex64] {
        &self.spatial
    }
    pub fn spectral(&self) -> &[Complex64] {
        &self.spectral
    }
    pub fn truth(&self) -> Option<GroundTruth> {
        self.truth
    }
    /// Largest order up to which both moment routes agree.
    pub fn moment_cap(&self) -> Option<usize> {
        self.resolved
    }
    pub fn spectrum_fn(&self) -> SpectrumFn {
        self.spectrum_fn.clone()
    }

    pub fn spectrum_at(&self, u: &[f64]) -> Complex64 {
        (self.spectrum_fn)(u)
    }

    pub fn spectrum_at1(&self, u: f64) -> Complex64 {
        (self.spectrum_fn)(&[u])
    }

    /// φ^{(m)}(t), one-dimensional kernels only.
    pub fn deriv_at(&self, m: usize, t: f64) -> Complex64 {
        match &self.deriv_fn {
            Some(d) => d(m, t),
            None => panic!("pointwise derivatives are only available for 1D kernels"),
        }
    }

    pub fn value_at(&self, t: f64) -> Complex64 {
        self.deriv_at(0, t)
    }

    /// Pointwise value at a point of ℝⁿ (1D closed form or 2D multilinear interpolation).
    pub fn value_at_point(&self, t: &[f64]) -> Complex64 {
        if self.dim() == 1 {
            return self.value_at(t[0]);
        }
        let (a0, a1) = (self.grid.axis(0), self.grid.axis(1));
        let p0 = (t[0] - a0.origin) / a0.spacing;
        let p1 = (t[1] - a1.origin) / a1.spacing;
        if p0 < 0.0 || p1 < 0.0 || p0 > (a0.count - 1) as f64 || p1 > (a1.count - 1) as f64 {
            return ZERO;
        }
        let i = (p0.floor() as usize).min(a0.count - 2);
        let j = (p1.floor() as usize).min(a1.count - 2);
        let (s, r) = (p0 - i as f64, p1 - j as f64);
        let v = |a: usize, b: usize| self.spatial[a * a1.count + b];
        v(i, j) * (1.0 - s) * (1.0 - r) + v(i + 1, j) * s * (1.0 - r) + v(i, j + 1) * (1.0 - s) * r
            + v(i + 1, j + 1) * s * r
    }

    /// `φ(· − h)`.
    pub fn translated(&self, h: &[f64]) -> Result<Kernel> {
        if h.len() != self.dim() {
            return Err(TslError::InvalidParameter("shift dimension mismatch".into()));
        }
        let axes: Vec<Axis> = self
            .grid
            .axes()
            .iter()
            .zip(h)
            .map(|(a, hi)| Axis::new(a.origin + hi, a.spacing, a.count))
            .collect::<Result<_>>()?;
        let grid = UniformGrid::new(axes)?;
        let hv = h.to_vec();
        let spectral: Vec<Complex64> = (0..grid.len())
            .map(|k| {
                let u = grid.frequency(k);
                let ph: f64 = u.iter().zip(&hv).map(|(a, b)| a * b).sum();
                self.spectral[k] * Complex64::from_polar(1.0, -ph)
            })
            .collect();
        let f = self.spectrum_fn.clone();
        let hv2 = hv.clone();
        let spectrum: SpectrumFn = Arc::new(move |u: &[f64]| {
            let ph: f64 = u.iter().zip(&hv2).map(|(a, b)| a * b).sum();
            f(u) * Complex64::from_polar(1.0, -ph)
        });
        let deriv = self.deriv_fn.clone().map(|d| {
            let h0 = hv[0];
            Arc::new(move |m: usize, t: f64| d(m, t - h0)) as DerivFn
        });
        Ok(Kernel::assemble(&self.name, grid, self.spatial.to_vec(), spectral, spectrum, deriv))
    }

    /// `a^{−n} φ(·/a)`, with spectrum `φ̂(a u)`.
    pub fn dilated(&self, a: f64) -> Result<Kernel> {
        if !(a.is_finite() && a > 0.0) {
            return Err(TslError::InvalidParameter(format!("dilation must be positive, got {a}")));
        }
        let axes: Vec<Axis> = self
            .grid
            .axes()
            .iter()
            .map(|ax| Axis::new(ax.origin * a, ax.spacing * a, ax.count))
            .collect::<Result<_>>()?;
        let grid = UniformGrid::new(axes)?;
        let norm = a.powi(self.dim() as i32);
        let spatial: Vec<Complex64> = self.spatial.iter().map(|v| v / norm).collect();
        let f = self.spectrum_fn.clone();
        let spectrum: SpectrumFn = Arc::new(move |u: &[f64]| {
            let v: Vec<f64> = u.iter().map(|x| x * a).collect();
            f(&v)
        });
        let deriv = self
            .deriv_fn
            .clone()
            .map(|d| Arc::new(move |m: usize, t: f64| d(m, t / a) * a.powi(-1 - m as i32)) as DerivFn);
        Ok(Kernel::assemble(&self.name, grid, spatial, self.spectral.to_vec(), spectrum, deriv))
    }

    /// `t ↦ conj φ(−t)`, whose spectrum is `conj φ̂`.
    pub fn reflected_conjugate(&self) -> Result<Kernel> {
        let axes: Vec<Axis> = self
            .grid
            .axes()
            .iter()
            .map(|a| Axis::new(-a.last(), a.spacing, a.count))
            .collect::<Result<_>>()?;
        let grid = UniformGrid::new(axes)?;
        let n = self.spatial.len();
        let spatial: Vec<Complex64> = (0..n).map(|i| self.spatial[n - 1 - i].conj()).collect();
        let spectral: Vec<Complex64> = (0..n)
            .map(|k| (self.spectrum_fn)(&grid.frequency(k)).conj())
            .collect();
        let f = self.spectrum_fn.clone();
        let spectrum: SpectrumFn = Arc::new(move |u: &[f64]| f(u).conj());
        let deriv = self.deriv_fn.clone().map(|d| {
            Arc::new(move |m: usize, t: f64| {
                let s = if m % 2 == 0 { 1.0 } else { -1.0 };
                d(m, -t).conj() * s
            }) as DerivFn
        });
        Ok(Kernel::assemble(&self.name, grid, spatial, spectral, spectrum, deriv))
    }

    /// Same spectrum sampled on another grid.
    pub fn resampled(&self, grid: UniformGrid) -> Result<Kernel> {
        if grid.dim() != self.dim() {
            return Err(TslError::InvalidParameter("grid dimension mismatch".into()));
        }
        let k = Kernel::from_spectrum(&self.name, grid, self.spectrum_fn.clone(), self.deriv_fn.clone(), EdgeCheck::default())?;
        Ok(match self.truth {
            Some(t) => k.with_truth(t),
            None => k,
        })
    }

    /// `t ↦ φ(−t)`, whose spectrum is `φ̂(−u)`.
    pub fn reflected(&self) -> Result<Kernel> {
        let axes: Vec<Axis> = self
            .grid
            .axes()
            .iter()
            .map(|a| Axis::new(-a.last(), a.spacing, a.count))
            .collect::<Result<_>>()?;
        let grid = UniformGrid::new(axes)?;
        let n = self.spatial.len();
        let spatial: Vec<Complex64> = (0..n).map(|i| self.spatial[n - 1 - i]).collect();
        let f = self.spectrum_fn.clone();
        let spectrum: SpectrumFn = Arc::new(move |u: &[f64]| {
            let v: Vec<f64> = u.iter().map(|x| -x).collect();
            f(&v)
        });
        let spectral: Vec<Complex64> = (0..n).map(|k| spectrum(&grid.frequency(k))).collect();
        let deriv = self.deriv_fn.clone().map(|d| {
            Arc::new(move |m: usize, t: f64| {
                let s = if m % 2 == 0 { 1.0 } else { -1.0 };
                d(m, -t) * s
            }) as DerivFn
        });
        Ok(Kernel::assemble(&self.name, grid, spatial, spectral, spectrum, deriv))
    }

    pub fn scaled(&self, c: Complex64) -> Kernel {
        let f = self.spectrum_fn.clone();
        let spectrum: SpectrumFn = Arc::new(move |u: &[f64]| f(u) * c);
        let deriv = self
            .deriv_fn
            .clone()
            .map(|d| Arc::new(move |m: usize, t: f64| d(m, t) * c) as DerivFn);
        let mut k = Kernel::assemble(
            &self.name,
            self.grid.clone(),
            self.spatial.iter().map(|v| v * c).collect(),
            self.spectral.iter().map(|v| v * c).collect(),
            spectrum,
            deriv,
        );
        if c != ZERO {
            k.truth = self.truth;
        }
        k
    }

    /// `a·φ₁ + b·φ₂` for kernels on the same grid.
    pub fn combine(a: Complex64, k1: &Kernel, b: Complex64, k2: &Kernel) -> Result<Kernel> {
        if !k1.grid.approx_eq(&k2.grid) {
            return Err(TslError::InvalidParameter("kernels live on different grids".into()));
        }
        let (f1, f2) = (k1.spectrum_fn.clone(), k2.spectrum_fn.clone());
        let spectrum: SpectrumFn = Arc::new(move |u: &[f64]| f1(u) * a + f2(u) * b);
        let deriv = match (k1.deriv_fn.clone(), k2.deriv_fn.clone()) {
            (Some(d1), Some(d2)) => Some(Arc::new(move |m: usize, t: f64| d1(m, t) * a + d2(m, t) * b) as DerivFn),
            _ => None,
        };
        let spatial = k1.spatial.iter().zip(k2.spatial.iter()).map(|(x, y)| x * a + y * b).collect();
        let spectral = k1.spectral.iter().zip(k2.spectral.iter()).map(|(x, y)| x * a + y * b).collect();
        Ok(Kernel::assemble(
            &format!("{}+{}", k1.name, k2.name),
            k1.grid.clone(),
            spatial,
            spectral,
            spectrum,
            deriv,
        ))
    }
}

fn interpolating_spectrum(grid: &UniformGrid, spectral: &[Complex64]) -> SpectrumFn {
    let grid = grid.clone();
    let spec = Arc::new(spectral.to_vec());
    if grid.dim() == 1 {
        let a = *grid.axis(0);
        Arc::new(move |u: &[f64]| {
            let u0 = a.u(0);
            if u[0] < u0 || u[0] > a.u(a.count - 1) {
                return ZERO;
            }
            lagrange_equispaced(&spec, u0, a.du(), u[0], 8)
        })
    } else {
        Arc::new(move |u: &[f64]| interpolate_spectrum(&spec, &grid, u))
    }
}

struct DerivTable {
    fine: Axis,
    padded: Vec<Complex64>,
    tables: Vec<OnceLock<Vec<Complex64>>>,
}

impl DerivTable {
    fn table(&self, m: usize) -> &[Complex64] {
        self.tables[m].get_or_init(|| {
            let grid = UniformGrid::new(vec![self.fine]).expect("valid fine grid");
            let im = Complex64::new(0.0, 1.0);
            let spec: Vec<Complex64> = self
                .padded
                .iter()
                .enumerate()
                .map(|(k, v)| v * (im * self.fine.u(k)).powu(m as u32))
                .collect();
            inverse_spectrum(&spec, &grid)
        })
    }
}

/// Pointwise derivatives from a 4× oversampled spectral table with 8-point interpolation.
fn table_derivatives(grid: &UniformGrid, spectral: &[Complex64]) -> DerivFn {
    let a = *grid.axis(0);
    let n = a.count;
    let fine = Axis::new(a.origin, a.spacing / 4.0, 4 * n).expect("valid fine axis");
    let mut padded = vec![ZERO; 4 * n];
    let off = 3 * n / 2;
    padded[off..off + n].copy_from_slice(spectral);
    let table = Arc::new(DerivTable {
        fine,
        padded,
        tables: (0..=MAX_DERIV_ORDER).map(|_| OnceLock::new()).collect(),
    });
    Arc::new(move |m: usize, t: f64| {
        assert!(m <= MAX_DERIV_ORDER, "derivative order {m} above {MAX_DERIV_ORDER}");
        let f = table.fine;
        if t < f.origin || t > f.last() {
            return ZERO;
        }
        lagrange_equispaced(table.table(m), f.origin, f.spacing, t, 8)
    })
}

fn multi_indices(dim: usize, q: usize) -> Vec<Vec<usize>> {
    if dim == 1 {
        vec![vec![q]]
    } else {
        (0..=q).rev().map(|a| vec![a, q - a]).collect()
    }
}

/// Stride of the difference stencil along `ax`; `None` when the spectrum vanishes near 0.
fn fd_stride(grid: &UniformGrid, spectral: &[Complex64], ax: usize) -> Option<usize> {
    let a = grid.axis(ax);
    let c = a.count / 2;
    if flat_bins(grid, spectral) >= 1 {
        return None;
    }
    let s = ((FD_STEP / a.du()).round() as usize).max(1);
    Some(s.min((c - 1) / FD_HALF_WIDTH).max(1))
}

/// Largest `b` such that the spectrum is negligible on the box of half-width `b` bins around 0
/// (0 if it is not negligible at the origin).
fn flat_bins(grid: &UniformGrid, spectral: &[Complex64]) -> usize {
    let thr = 1e-13 * max_abs(spectral);
    let centers: Vec<usize> = grid.axes().iter().map(|a| a.count / 2).collect();
    let limit = centers.iter().copied().min().unwrap_or(0);
    let at = |k: &[usize]| -> f64 {
        if grid.dim() == 1 {
            spectral[k[0]].norm()
        } else {
            spectral[k[0] * grid.axis(1).count + k[1]].norm()
        }
    };
    if at(&centers) > thr {
        return 0;
    }
    let mut b = 0;
    while b + 1 < limit {
        let nb = b + 1;
        let shell_ok = if grid.dim() == 1 {
            at(&[centers[0] + nb]) <= thr && at(&[centers[0] - nb]) <= thr
        } else {
            let (c0, c1) = (centers[0], centers[1]);
            (c0 - nb..=c0 + nb).all(|i| {
                at(&[i, c1 - nb]) <= thr && at(&[i, c1 + nb]) <= thr
            }) && (c1 - nb..=c1 + nb).all(|j| at(&[c0 - nb, j]) <= thr && at(&[c0 + nb, j]) <= thr)
        };
        if !shell_ok {
            break;
        }
        b = nb;
    }
    b
}

/// Central-difference weights with exact parity.
fn symmetric_weights(m: usize, h: f64) -> Vec<f64> {
    let p = FD_HALF_WIDTH as i64;
    let nodes: Vec<f64> = (-p..=p).map(|o| o as f64 * h).collect();
    let w = fornberg_weights(m, &nodes);
    let n = w.len();
    let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
    (0..n).map(|i| 0.5 * (w[i] + sign * w[n - 1 - i])).collect()
}

fn spectral_derivative(grid: &UniformGrid, spectral: &[Complex64], index: &[usize], strides: &[usize]) -> Complex64 {
    let p = FD_HALF_WIDTH as i64;
    let offs: Vec<i64> = (-p..=p).collect();
    let weights: Vec<Vec<f64>> = index
        .iter()
        .enumerate()
        .map(|(ax, &m)| symmetric_weights(m, strides[ax] as f64 * grid.axis(ax).du()))
        .collect();
    if grid.dim() == 1 {
        let c = (grid.axis(0).count / 2) as i64;
        offs.iter()
            .zip(&weights[0])
            .map(|(&o, w)| spectral[(c + o * strides[0] as i64) as usize] * *w)
            .sum()
    } else {
        let (c0, c1) = ((grid.axis(0).count / 2) as i64, (grid.axis(1).count / 2) as i64);
        let n1 = grid.axis(1).count as i64;
        let mut acc = ZERO;
        for (o0, w0) in offs.iter().zip(&weights[0]) {
            if *w0 == 0.0 {
                continue;
            }
            for (o1, w1) in offs.iter().zip(&weights[1]) {
                let i = (c0 + o0 * strides[0] as i64) * n1 + c1 + o1 * strides[1] as i64;
                acc += spectral[i as usize] * (w0 * w1);
            }
        }
        acc
    }
}

fn compute_moments(
    grid: &UniformGrid,
    spatial: &[Complex64],
    spectral: &[Complex64],
    cap: usize,
) -> (Vec<Moment>, Option<usize>, Option<Disagreement>) {
    let strides: Option<Vec<usize>> = (0..grid.dim()).map(|ax| fd_stride(grid, spectral, ax)).collect();
    let weights: Vec<f64> = {
        let w: Vec<Vec<f64>> = grid.axes().iter().map(crate::grid::trapezoid_weights).collect();
        (0..grid.len())
            .map(|i| {
                if grid.dim() == 1 {
                    w[0][i]
                } else {
                    let n1 = grid.axis(1).count;
                    w[0][i / n1] * w[1][i % n1]
                }
            })
            .collect()
    };
    let points: Vec<Vec<f64>> = (0..grid.len()).map(|i| grid.point(i)).collect();
    let im = Complex64::new(0.0, 1.0);
    let mut out = Vec::new();
    for q in 0..=cap {
        for index in multi_indices(grid.dim(), q) {
            let quad: Complex64 = spatial
                .iter()
                .zip(&weights)
                .zip(&points)
                .map(|((v, w), x)| {
                    let mono: f64 = x.iter().zip(&index).map(|(xi, &mi)| xi.powi(mi as i32)).product();
                    v * (w * mono)
                })
                .sum();
            let spec = match &strides {
                Some(st) => im.powu(q as u32) * spectral_derivative(grid, spectral, &index, st),
                None => ZERO,
            };
            if (quad - spec).norm() > MOMENT_TOL * quad.norm().max(1.0) {
                let resolved = if q == 0 { None } else { Some(q - 1) };
                out.retain(|m: &Moment| m.order() < q);
                return (out, resolved, Some(Disagreement { order: q, quadrature: quad, spectral: spec }));
            }
            out.push(Moment { index, re: quad.re, im: quad.im });
        }
    }
    (out, Some(cap), None)
}

/// Moments μ_m for |m| ≤ `max_order`, cross-checked against spectral differentiation.
pub fn moments(kernel: &Kernel, max_order: usize) -> Result<Vec<Moment>> {
    if max_order > DEFAULT_MOMENT_CAP {
        return Err(TslError::Precondition(format!(
            "moment order {max_order} above cap {DEFAULT_MOMENT_CAP}"
        )));
    }
    match kernel.resolved {
        Some(r) if r >= max_order => Ok(kernel.moments.iter().filter(|m| m.order() <= max_order).cloned().collect()),
        _ => {
            let d = kernel.disagreement.as_ref().expect("unresolved moments carry a disagreement");
            let diff = d.quadrature - d.spectral;
            let (a, b) = if diff.re.abs() >= diff.im.abs() {
                (d.quadrature.re, d.spectral.re)
            } else {
                (d.quadrature.im, d.spectral.im)
            };
            Err(TslError::MomentDisagreement { order: d.order, quadrature: a, spectral: b })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaylorTerm {
    pub q: usize,
    /// `(multi-index, [re, im])` coefficient of `u^m`.
    pub coefficients: Vec<(Vec<usize>, [f64; 2])>,
}

impl TaylorTerm {
    pub fn eval(&self, u: &[f64]) -> Complex64 {
        self.coefficients
            .iter()
            .map(|(m, c)| {
                let mono: f64 = u.iter().zip(m).map(|(x, &k)| x.powi(k as i32)).product();
                Complex64::new(c[0], c[1]) * mono
            })
            .sum()
    }

    pub fn is_zero(&self, tol: f64) -> bool {
        self.coefficients.iter().all(|(_, c)| c[0].hypot(c[1]) <= tol)
    }
}

/// Homogeneous Taylor terms `P_q(u) = Σ_{|m|=q} û^{(m)}(0)/m! u^m`.
pub fn taylor_terms(kernel: &Kernel, q_max: usize) -> Result<Vec<TaylorTerm>> {
    let mom = moments(kernel, q_max)?;
    let mi = Complex64::new(0.0, -1.0);
    Ok((0..=q_max)
        .map(|q| TaylorTerm {
            q,
            coefficients: mom
                .iter()
                .filter(|m| m.order() == q)
                .map(|m| {
                    let fact: f64 = m.index.iter().map(|&k| factorial(k)).product();
                    let c = mi.powu(q as u32) * m.value() / fact;
                    (m.index.clone(), [c.re, c.im])
                })
                .collect(),
        })
        .collect())
}

/// Radial profiles `(r_k, |φ̂(r_k ω)|)` along the sampled directions.
pub fn ray_profiles(spectral: &[Complex64], grid: &UniformGrid, ray_count: usize) -> Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    if grid.dim() == 1 {
        let a = grid.axis(0);
        let c = a.count / 2;
        let du = a.du();
        let pos: Vec<f64> = (0..c).map(|k| spectral[c + k].norm()).collect();
        let neg: Vec<f64> = (0..=c).map(|k| spectral[c - k].norm()).collect();
        vec![
            (vec![1.0], (0..c).map(|k| k as f64 * du).collect(), pos),
            (vec![-1.0], (0..=c).map(|k| k as f64 * du).collect(), neg),
        ]
    } else {
        let sg = grid.spectral();
        let step = sg.axes.iter().map(|a| a.du).fold(f64::INFINITY, f64::min);
        let rmax = sg.inner_radius();
        let count = (rmax / step).floor() as usize + 1;
        (0..ray_count)
            .map(|i| {
                let th = 2.0 * PI * i as f64 / ray_count as f64;
                let w = vec![th.cos(), th.sin()];
                let rs: Vec<f64> = (0..count).map(|k| k as f64 * step).collect();
                let vs: Vec<f64> = rs
                    .iter()
                    .map(|r| interpolate_spectrum(spectral, grid, &[r * w[0], r * w[1]]).norm())
                    .collect();
                (w, rs, vs)
            })
            .collect()
    }
}

fn max_abs(v: &[Complex64]) -> f64 {
    v.iter().map(|c| c.norm()).fold(0.0, f64::max)
}

pub fn spectrum_is_nondegenerate(spectral: &[Complex64], grid: &UniformGrid, ray_count: usize, tol: f64) -> bool {
    let thr = tol * max_abs(spectral);
    if thr == 0.0 {
        return false;
    }
    ray_profiles(spectral, grid, ray_count)
        .iter()
        .all(|(_, _, v)| v.iter().any(|x| *x > thr))
}

pub fn is_nondegenerate(kernel: &Kernel, ray_count: usize, tol: f64) -> bool {
    spectrum_is_nondegenerate(&kernel.spectral, &kernel.grid, ray_count, tol)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauEstimate {
    pub value: f64,
    pub uncertainty: f64,
}

fn ray_tau(rs: &[f64], vs: &[f64], thr: f64) -> Option<f64> {
    let mut i = vs.iter().position(|v| *v > thr)?;
    while i > 0 && vs[i - 1] > 0.0 && vs[i - 1] < vs[i] {
        i -= 1;
    }
    Some(if i == 0 { 0.0 } else { rs[i - 1] })
}

pub fn spectrum_tau(spectral: &[Complex64], grid: &UniformGrid, ray_count: usize, tol: f64) -> Result<TauEstimate> {
    let thr = tol * max_abs(spectral);
    let profiles = ray_profiles(spectral, grid, ray_count);
    let mut tau: f64 = 0.0;
    for (w, rs, vs) in &profiles {
        match ray_tau(rs, vs, thr) {
            Some(t) => tau = tau.max(t),
            None => {
                return Err(TslError::DegenerateKernel(format!(
                    "spectrum vanishes along direction {w:?}"
                )))
            }
        }
    }
    let step = profiles[0].1[1] - profiles[0].1[0];
    Ok(TauEstimate { value: tau, uncertainty: step })
}

pub fn nondegeneracy_index(kernel: &Kernel, tol: f64) -> Result<TauEstimate> {
    spectrum_tau(&kernel.spectral, &kernel.grid, DEFAULT_RAYS, tol)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrongNondegeneracy {
    pub n: usize,
    pub c: f64,
    pub r: f64,
}

pub fn spectrum_strong(
    spectral: &[Complex64],
    grid: &UniformGrid,
    ray_count: usize,
    n_max: usize,
    r_grid: &[f64],
    exact: Option<&SpectrumFn>,
) -> Option<StrongNondegeneracy> {
    let profiles = ray_profiles(spectral, grid, ray_count);
    let mut slope = f64::NEG_INFINITY;
    for (_, rs, vs) in &profiles {
        let (lx, ly): (Vec<f64>, Vec<f64>) = (1..=4)
            .filter(|&k| k < rs.len())
            .map(|k| (rs[k].ln(), vs[k].ln()))
            .unzip();
        if ly.iter().any(|v| !v.is_finite()) {
            return None;
        }
        slope = slope.max(linear_fit(&lx, &ly)?.0);
    }
    let n = (slope - 0.5).ceil().max(0.0) as usize;
    if n > n_max {
        return None;
    }
    let mut best: Option<StrongNondegeneracy> = None;
    let rmax = profiles.iter().map(|(_, rs, _)| *rs.last().unwrap()).fold(f64::INFINITY, f64::min);
    for &r in r_grid.iter().filter(|r| **r > 0.0 && **r <= rmax) {
        let mut c = profiles
            .iter()
            .flat_map(|(_, rs, vs)| {
                rs.iter()
                    .zip(vs)
                    .filter(|(x, _)| **x > 0.0 && **x <= r * (1.0 + 1e-12))
                    .map(|(x, v)| v / x.powi(n as i32))
            })
            .fold(f64::INFINITY, f64::min);
        if let Some(f) = exact {
            for (w, _, _) in &profiles {
                let u: Vec<f64> = w.iter().map(|x| x * r).collect();
                c = c.min(f(&u).norm() / r.powi(n as i32));
            }
        }
        if c.is_finite() && c >= 1e-13 && best.map_or(true, |b| c > b.c) {
            best = Some(StrongNondegeneracy { n, c, r });
        }
    }
    best
}

pub fn strong_nondegeneracy(kernel: &Kernel, n_max: usize, r_grid: &[f64]) -> Option<StrongNondegeneracy> {
    spectrum_strong(
        &kernel.spectral,
        &kernel.grid,
        DEFAULT_RAYS,
        n_max.min(DEFAULT_N_MAX),
        r_grid,
        Some(&kernel.spectrum_fn),
    )
}

/// Whether all moments of order `< d` vanish to `tol`.
#[allow(non_snake_case)]
pub fn is_in_moment_ideal_Pd(kernel: &Kernel, d: usize, tol: f64) -> Result<bool> {
    if d == 0 {
        return Ok(true);
    }
    let mom = moments(kernel, d - 1)?;
    Ok(mom.iter().all(|m| m.value().norm() <= tol))
}

pub fn first_nonvanishing_moment_order(kernel: &Kernel, tol: f64) -> Option<usize> {
    kernel.moments.iter().find(|m| m.value().norm() > tol).map(|m| m.order())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelReport {
    pub name: String,
    pub nondegenerate: bool,
    pub tau: Option<TauEstimate>,
    pub strong: Option<StrongNondegeneracy>,
    pub moments: Vec<Moment>,
    pub moment_cap: Option<usize>,
    pub first_nonvanishing_moment_order: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalyzeOptions {
    pub ray_count: usize,
    pub tol: f64,
    pub n_max: usize,
    pub r_grid: Vec<f64>,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        AnalyzeOptions { ray_count: DEFAULT_RAYS, tol: SUPPORT_TOL, n_max: DEFAULT_N_MAX, r_grid: vec![1.0] }
    }
}

pub fn analyze(kernel: &Kernel, opts: &AnalyzeOptions) -> KernelReport {
    let (sp, g) = (&kernel.spectral, &kernel.grid);
    let nondegenerate = spectrum_is_nondegenerate(sp, g, opts.ray_count, opts.tol);
    let (tau, strong) = if nondegenerate {
        (
            spectrum_tau(sp, g, opts.ray_count, opts.tol).ok(),
            spectrum_strong(
                sp,
                g,
                opts.ray_count,
                opts.n_max.min(DEFAULT_N_MAX),
                &opts.r_grid,
                Some(&kernel.spectrum_fn),
            ),
        )
    } else {
        (None, None)
    };
    KernelReport {
        name: kernel.name.clone(),
        nondegenerate,
        tau,
        strong,
        moments: kernel.moments.clone(),
        moment_cap: kernel.resolved,
        first_nonvanishing_moment_order: first_nonvanishing_moment_order(kernel, MOMENT_TOL),
    }
}

/// Writes `<stem>.tbrg` (real and imaginary parts) and `<stem>.json`.
pub fn save_kernel(kernel: &Kernel, report: &KernelReport, stem: &std::path::Path) -> Result<()> {
    let vals: Vec<f64> = kernel.spatial.iter().flat_map(|c| [c.re, c.im]).collect();
    crate::io::save_tbrg1(&stem.with_extension("tbrg"), &kernel.grid, 2, &vals)?;
    let json = serde_json::to_string_pretty(report).map_err(|e| TslError::Format(e.to_string()))?;
    std::fs::write(stem.with_extension("json"), json)?;
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelParams {
    pub n: Option<usize>,
    pub tau0: Option<f64>,
    pub center: Option<f64>,
    pub width: Option<f64>,
    pub transition: Option<f64>,
    pub coeff: Option<f64>,
    pub degree: Option<u32>,
}

impl KernelParams {
    pub fn dim(n: usize) -> Self {
        KernelParams { n: Some(n), ..Default::default() }
    }
}

pub const CATALOG: &[&str] = &[
    "gaussian-heat",
    "mexican-hat",
    "psi1",
    "annular-exp",
    "s0-bump",
    "cone-exp",
    "heat-symbol",
    "compact-bump",
    "gaussian-u1",
];

fn check_range(name: &str, v: f64, lo: f64, hi: f64) -> Result<f64> {
    if v.is_finite() && v >= lo && v <= hi {
        Ok(v)
    } else {
        Err(TslError::InvalidParameter(format!("{name} = {v} outside [{lo}, {hi}]")))
    }
}

fn radius(u: &[f64]) -> f64 {
    u.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn real(v: f64) -> Complex64 {
    Complex64::new(v, 0.0)
}

fn wide_grid(n: usize) -> Result<UniformGrid> {
    match n {
        1 => UniformGrid::new(vec![Axis::centered(8192, 0.1)?]),
        _ => UniformGrid::new(vec![Axis::centered(256, 0.1)?; 2]),
    }
}

fn edge_for(n: usize) -> EdgeCheck {
    if n == 1 {
        EdgeCheck::default()
    } else {
        EdgeCheck::Waive
    }
}

pub fn catalog(name: &str, params: &KernelParams) -> Result<Kernel> {
    let n = params.n.unwrap_or(1);
    if n != 1 && n != 2 {
        return Err(TslError::InvalidParameter(format!("dimension {n} not in {{1, 2}}")));
    }
    let one_d = |what: &str| -> Result<()> {
        if n != 1 {
            Err(TslError::InvalidParameter(format!("{what} is one-dimensional")))
        } else {
            Ok(())
        }
    };
    match name {
        "gaussian-heat" => gaussian_heat(n),
        "mexican-hat" => mexican_hat(n),
        "psi1" => {
            one_d(name)?;
            psi1()
        }
        "annular-exp" => annular_exp(check_range("tau0", params.tau0.unwrap_or(0.5), 0.0, 4.0)?, n),
        "s0-bump" => {
            let c = check_range("center", params.center.unwrap_or(2.0), 0.1, 12.0)?;
            let w = check_range("width", params.width.unwrap_or(1.0), 0.1, 2.0 * c)?;
            if w >= 2.0 * c {
                return Err(TslError::InvalidParameter("bump must stay away from 0 (width < 2·center)".into()));
            }
            s0_bump(c, w, n)
        }
        "cone-exp" => {
            one_d(name)?;
            cone_exp(check_range("transition", params.transition.unwrap_or(1.0), 0.5, 4.0)?)
        }
        "heat-symbol" => {
            one_d(name)?;
            let d = params.degree.unwrap_or(4);
            if !(d == 2 || d == 4 || d == 6) {
                return Err(TslError::InvalidParameter(format!("degree {d} not in {{2, 4, 6}}")));
            }
            heat_symbol(check_range("coeff", params.coeff.unwrap_or(1.0), 0.25, 4.0)?, d)
        }
        "compact-bump" => {
            one_d(name)?;
            compact_bump()
        }
        "gaussian-u1" => gaussian_u1(),
        _ => Err(TslError::UnknownKernel(name.to_string())),
    }
}

/// Heat kernel at time 1: `û = e^{−|u|²}`.
pub fn gaussian_heat(n: usize) -> Result<Kernel> {
    let truth = GroundTruth { nondegenerate: true, tau: Some(0.0), strong_n: Some(0) };
    let spec: SpectrumFn = Arc::new(|u: &[f64]| real((-u.iter().map(|x| x * x).sum::<f64>()).exp()));
    if n == 1 {
        let norm = 1.0 / (2.0 * PI.sqrt());
        let deriv: DerivFn = Arc::new(move |m: usize, t: f64| {
            real(norm * (-0.5f64).powi(m as i32) * hermite_h(m, t / 2.0) * (-t * t / 4.0).exp())
        });
        let grid = UniformGrid::centered_line(40.0, 2048)?;
        let d0 = deriv.clone();
        Ok(Kernel::from_pair("gaussian-heat", grid, move |t| d0(0, t[0]), spec, Some(deriv))?.with_truth(truth))
    } else {
        let grid = UniformGrid::centered_square(20.0, 128)?;
        let space = |t: &[f64]| real((-(t[0] * t[0] + t[1] * t[1]) / 4.0).exp() / (4.0 * PI));
        Ok(Kernel::from_pair("gaussian-heat", grid, space, spec, None)?.with_truth(truth))
    }
}

/// `(1 − t²)e^{−t²/2}` in 1D, `(2 − |t|²)e^{−|t|²/2}` in 2D.
pub fn mexican_hat(n: usize) -> Result<Kernel> {
    let truth = GroundTruth { nondegenerate: true, tau: Some(0.0), strong_n: Some(2) };
    if n == 1 {
        let spec: SpectrumFn = Arc::new(|u: &[f64]| real((2.0 * PI).sqrt() * u[0] * u[0] * (-u[0] * u[0] / 2.0).exp()));
        let deriv: DerivFn = Arc::new(|m: usize, t: f64| {
            let s = if m % 2 == 0 { -1.0 } else { 1.0 };
            real(s * hermite_he(m + 2, t) * (-t * t / 2.0).exp())
        });
        let grid = UniformGrid::centered_line(40.0, 2048)?;
        let d0 = deriv.clone();
        Ok(Kernel::from_pair("mexican-hat", grid, move |t| d0(0, t[0]), spec, Some(deriv))?.with_truth(truth))
    } else {
        let spec: SpectrumFn = Arc::new(|u: &[f64]| {
            let r2: f64 = u.iter().map(|x| x * x).sum();
            real(2.0 * PI * r2 * (-r2 / 2.0).exp())
        });
        let grid = UniformGrid::centered_square(20.0, 128)?;
        let space = |t: &[f64]| {
            let r2 = t[0] * t[0] + t[1] * t[1];
            real((2.0 - r2) * (-r2 / 2.0).exp())
        };
        Ok(Kernel::from_pair("mexican-hat", grid, space, spec, None)?.with_truth(truth))
    }
}

/// `ψ̂₁(u) = e^{−|u|−1/|u|}`.
pub fn psi1() -> Result<Kernel> {
    let spec: SpectrumFn = Arc::new(|u: &[f64]| {
        let r = u[0].abs();
        if r == 0.0 {
            ZERO
        } else {
            real((-r - 1.0 / r).exp())
        }
    });
    let truth = GroundTruth { nondegenerate: true, tau: Some(0.0), strong_n: None };
    Ok(Kernel::from_spectrum("psi1", wide_grid(1)?, spec, None, EdgeCheck::default())?.with_truth(truth))
}

/// `û(u) = e^{−|u|−1/(|u|−τ₀)}` for `|u| > τ₀`, zero otherwise.
pub fn annular_exp(tau0: f64, n: usize) -> Result<Kernel> {
    let spec: SpectrumFn = Arc::new(move |u: &[f64]| {
        let r = radius(u);
        if r <= tau0 {
            ZERO
        } else {
            real((-r - 1.0 / (r - tau0)).exp())
        }
    });
    let truth = GroundTruth { nondegenerate: true, tau: Some(tau0), strong_n: None };
    Ok(Kernel::from_spectrum("annular-exp", wide_grid(n)?, spec, None, edge_for(n))?.with_truth(truth))
}

/// Smooth bump in `|u|` centered at `center` with full width `width`, peak 1.
pub fn s0_bump(center: f64, width: f64, n: usize) -> Result<Kernel> {
    let half = width / 2.0;
    let spec: SpectrumFn = Arc::new(move |u: &[f64]| {
        let s = (radius(u) - center) / half;
        if s.abs() >= 1.0 {
            ZERO
        } else {
            real((1.0 - 1.0 / (1.0 - s * s)).exp())
        }
    });
    let grid = if n == 1 {
        let length = (1638.0 / width).clamp(819.0, 3276.0);
        let dx = if length / 0.1 <= 32768.0 { 0.1 } else { 0.2 };
        if center + half > PI / dx {
            return Err(TslError::InvalidParameter("bump exceeds the spectral extent".into()));
        }
        let count = ((length / dx).ceil() as usize).next_power_of_two();
        UniformGrid::new(vec![Axis::centered(count, dx)?])?
    } else {
        wide_grid(2)?
    };
    let truth = GroundTruth { nondegenerate: true, tau: Some(center - half), strong_n: None };
    Ok(Kernel::from_spectrum("s0-bump", grid, spec, None, edge_for(n))?.with_truth(truth))
}

/// Smoothly truncated exponential `φ̂(u) = e^{−u}(1 − S(−u/a))`, supported in `u > −a`.
pub fn cone_exp(a: f64) -> Result<Kernel> {
    let spec: SpectrumFn = Arc::new(move |u: &[f64]| {
        let v = u[0];
        if v <= -a {
            ZERO
        } else {
            real((-v).exp() * (1.0 - smooth_transition(-v / a)))
        }
    });
    let grid = UniformGrid::new(vec![Axis::centered(16384, 0.1)?])?;
    let truth = GroundTruth { nondegenerate: true, tau: Some(0.0), strong_n: Some(0) };
    Ok(Kernel::from_spectrum("cone-exp", grid, spec, None, EdgeCheck::default())?.with_truth(truth))
}

/// `φ̂(u) = e^{−c u^d}` for even `d`.
pub fn heat_symbol(coeff: f64, degree: u32) -> Result<Kernel> {
    let spec: SpectrumFn = Arc::new(move |u: &[f64]| real((-coeff * u[0].powi(degree as i32)).exp()));
    let grid = UniformGrid::centered_line(40.0, 2048)?;
    let truth = GroundTruth { nondegenerate: true, tau: Some(0.0), strong_n: Some(0) };
    Ok(Kernel::from_spectrum("heat-symbol", grid, spec, None, EdgeCheck::default())?.with_truth(truth))
}

/// Unit-mass `C exp(−1/(1−t²))` supported in `[−1, 1]`.
pub fn compact_bump() -> Result<Kernel> {
    let grid = UniformGrid::centered_line(4.0, 2048)?;
    let raw = |t: f64| if t.abs() < 1.0 { (-1.0 / (1.0 - t * t)).exp() } else { 0.0 };
    let vals: Vec<f64> = grid.axis(0).points().into_iter().map(raw).collect();
    let mass = crate::grid::quadrature(&vals, &grid, EdgeCheck::default())?;
    let spatial: Vec<Complex64> = vals.iter().map(|v| real(v / mass)).collect();
    let mut k = Kernel::from_samples("compact-bump", grid, spatial, None, None)?;
    let table = k.deriv_fn.clone().expect("1D kernels carry derivatives");
    k.deriv_fn = Some(Arc::new(move |m: usize, t: f64| {
        if t.abs() >= 1.0 {
            ZERO
        } else if m == 0 {
            real(raw(t) / mass)
        } else {
            table(m, t)
        }
    }));
    Ok(k.with_truth(GroundTruth { nondegenerate: true, tau: Some(0.0), strong_n: Some(0) }))
}

/// 2D kernel with `û(u) = u₁ e^{−|u|²}`, degenerate along the `u₂` axis.
pub fn gaussian_u1() -> Result<Kernel> {
    let spec: SpectrumFn = Arc::new(|u: &[f64]| real(u[0] * (-(u[0] * u[0] + u[1] * u[1])).exp()));
    let grid = UniformGrid::centered_square(20.0, 128)?;
    let truth = GroundTruth { nondegenerate: false, tau: None, strong_n: None };
    let space = |t: &[f64]| {
        Complex64::new(0.0, t[0] / 2.0 * (-(t[0] * t[0] + t[1] * t[1]) / 4.0).exp() / (4.0 * PI))
    };
    Ok(Kernel::from_pair("gaussian-u1", grid, space, spec, None)?.with_truth(truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::integrate_line;
    use proptest::prelude::*;

    fn moment(k: &Kernel, m: usize) -> Complex64 {
        moments(k, m).unwrap().into_iter().find(|x| x.order() == m).unwrap().value()
    }

    #[test]
    fn gaussian_moments_match_oracle() {
        let k = gaussian_heat(1).unwrap();
        let g = |t: f64| (-t * t / 4.0).exp() / (2.0 * PI.sqrt());
        let m0 = integrate_line(&g, 40.0, 1e-13);
        let m2 = integrate_line(&|t| t * t * g(t), 40.0, 1e-12);
        assert!((moment(&k, 0).re - 1.0).abs() < 1e-10 && (m0 - 1.0).abs() < 1e-10);
        assert!((moment(&k, 2).re - 2.0).abs() < 1e-8 && (m2 - 2.0).abs() < 1e-8);
        assert_eq!(k.moment_cap(), Some(10));
        let m4 = integrate_line(&|t| t.powi(4) * g(t), 40.0, 1e-10);
        assert!((moment(&k, 4).re - m4).abs() < 1e-7);
    }

    #[test]
    fn mexican_hat_moments() {
        let k = mexican_hat(1).unwrap();
        assert!(moment(&k, 0).norm() < 1e-12);
        assert!(moment(&k, 1).norm() < 1e-12);
        let oracle = integrate_line(&|t| t * t * (1.0 - t * t) * (-t * t / 2.0).exp(), 40.0, 1e-12);
        let expected = -2.0 * (2.0 * PI).sqrt();
        assert!((oracle - expected).abs() < 1e-8);
        assert!((moment(&k, 2).re - expected).abs() < 1e-8);
    }

    #[test]
    fn moment_errors() {
        let k = annular_exp(0.5, 1).unwrap();
        let cap = k.moment_cap().unwrap();
        assert!(moments(&k, cap).is_ok());
        assert!(matches!(moments(&k, cap + 1), Err(TslError::MomentDisagreement { .. })));
        assert!(matches!(moments(&k, 11), Err(TslError::Precondition(_))));
    }

    #[test]
    fn taylor_terms_examples() {
        let g = taylor_terms(&gaussian_heat(1).unwrap(), 2).unwrap();
        assert!((g[0].eval(&[0.3]).re - 1.0).abs() < 1e-10);
        assert!(g[1].is_zero(1e-10));
        assert!((g[2].eval(&[0.7]).re + 0.49).abs() < 1e-8);
        let h = taylor_terms(&mexican_hat(1).unwrap(), 2).unwrap();
        assert!(h[0].is_zero(1e-10) && h[1].is_zero(1e-10));
        assert!((h[2].coefficients[0].1[0] - (2.0 * PI).sqrt()).abs() < 1e-8);
        let a = taylor_terms(&psi1().unwrap(), 0).unwrap();
        assert!((a[0].eval(&[0.0]) - moment(&psi1().unwrap(), 0)).norm() < 1e-15);
        let two = taylor_terms(&gaussian_heat(2).unwrap(), 2).unwrap();
        let u = [0.3, -0.4];
        assert!((two[2].eval(&u).re + 0.25).abs() < 1e-7);
    }

    #[test]
    fn nondegeneracy_examples() {
        assert!(is_nondegenerate(&gaussian_heat(1).unwrap(), DEFAULT_RAYS, SUPPORT_TOL));
        assert!(!is_nondegenerate(&gaussian_u1().unwrap(), DEFAULT_RAYS, SUPPORT_TOL));
        assert!(is_nondegenerate(&annular_exp(0.5, 1).unwrap(), DEFAULT_RAYS, SUPPORT_TOL));
        assert!(is_nondegenerate(&gaussian_heat(2).unwrap(), 64, SUPPORT_TOL));
    }

    #[test]
    fn index_examples() {
        let t = nondegeneracy_index(&gaussian_heat(1).unwrap(), SUPPORT_TOL).unwrap();
        assert_eq!(t.value, 0.0);
        let k = annular_exp(0.5, 1).unwrap();
        let t = nondegeneracy_index(&k, SUPPORT_TOL).unwrap();
        assert!((t.value - 0.5).abs() <= t.uncertainty, "{t:?}");
        let one_sided: SpectrumFn = Arc::new(|u: &[f64]| {
            let s = (u[0] - 1.5) / 0.5;
            if s.abs() >= 1.0 {
                ZERO
            } else {
                real((1.0 - 1.0 / (1.0 - s * s)).exp())
            }
        });
        let grid = UniformGrid::new(vec![Axis::centered(16384, 0.1).unwrap()]).unwrap();
        let k = Kernel::from_spectrum("one-sided", grid, one_sided, None, EdgeCheck::default()).unwrap();
        // oracle: direct scan of the negative half-line
        assert!(k.spectral()[..8192].iter().all(|v| v.norm() == 0.0));
        assert!(matches!(nondegeneracy_index(&k, SUPPORT_TOL), Err(TslError::DegenerateKernel(_))));
        let t = nondegeneracy_index(&annular_exp(0.5, 2).unwrap(), SUPPORT_TOL).unwrap();
        assert!((t.value - 0.5).abs() <= t.uncertainty);
    }

    #[test]
    fn strong_examples() {
        let s = strong_nondegeneracy(&gaussian_heat(1).unwrap(), 12, &[1.0]).unwrap();
        let scan = (0..=10000).map(|i| (-(i as f64 / 10000.0).powi(2)).exp()).fold(f64::INFINITY, f64::min);
        assert_eq!(s.n, 0);
        assert!((s.c - scan).abs() < 1e-12 && (s.c - (-1.0f64).exp()).abs() < 1e-12);
        let s = strong_nondegeneracy(&mexican_hat(1).unwrap(), 12, &[1.0]).unwrap();
        assert_eq!(s.n, 2);
        assert!((s.c - (2.0 * PI).sqrt() * (-0.5f64).exp()).abs() < 1e-9);
        assert!(strong_nondegeneracy(&psi1().unwrap(), 12, &[1.0]).is_none());
        let ratio_small = (-1.0 / 0.01f64 - 0.01).exp() / 0.01f64.powi(12);
        assert!(ratio_small < 1e-13);
        let s = strong_nondegeneracy(&mexican_hat(2).unwrap(), 12, &[0.5, 1.0]).unwrap();
        assert_eq!(s.n, 2);
        assert_eq!(s.r, 0.5);
    }

    #[test]
    fn ideal_examples() {
        let h = mexican_hat(1).unwrap();
        assert!(is_in_moment_ideal_Pd(&h, 2, 1e-8).unwrap());
        assert!(!is_in_moment_ideal_Pd(&h, 3, 1e-8).unwrap());
        assert!(!is_in_moment_ideal_Pd(&gaussian_heat(1).unwrap(), 1, 1e-8).unwrap());
        assert!(is_in_moment_ideal_Pd(&gaussian_heat(1).unwrap(), 0, 1e-8).unwrap());
    }

    #[test]
    fn catalog_ground_truth() {
        let cases: Vec<(&str, KernelParams)> = vec![
            ("gaussian-heat", KernelParams::dim(1)),
            ("gaussian-heat", KernelParams::dim(2)),
            ("mexican-hat", KernelParams::dim(1)),
            ("psi1", KernelParams::default()),
            ("annular-exp", KernelParams { tau0: Some(0.5), ..Default::default() }),
            ("s0-bump", KernelParams { center: Some(2.0), width: Some(1.0), ..Default::default() }),
            ("cone-exp", KernelParams::default()),
            ("heat-symbol", KernelParams::default()),
            ("compact-bump", KernelParams::default()),
            ("gaussian-u1", KernelParams::default()),
        ];
        for (name, p) in cases {
            let k = catalog(name, &p).unwrap();
            let truth = k.truth().unwrap();
            let opts = AnalyzeOptions { r_grid: vec![0.5, 1.0], ..Default::default() };
            let r = analyze(&k, &opts);
            assert_eq!(r.nondegenerate, truth.nondegenerate, "{name}");
            if let (Some(t), Some(e)) = (r.tau, truth.tau) {
                assert!((t.value - e).abs() <= t.uncertainty, "{name}: {t:?}");
            }
            assert_eq!(r.strong.map(|s| s.n), truth.strong_n, "{name}");
            if r.strong.is_some() {
                assert!(r.nondegenerate);
            }
            if !r.nondegenerate {
                assert!(r.tau.is_none() && r.strong.is_none());
            }
            assert!(k.moment_cap().is_some(), "{name}");
        }
        assert!(matches!(catalog("nope", &KernelParams::default()), Err(TslError::UnknownKernel(_))));
        assert!(catalog("annular-exp", &KernelParams { tau0: Some(-1.0), ..Default::default() }).is_err());
        assert!(catalog("psi1", &KernelParams::dim(2)).is_err());
    }

    #[test]
    fn s0_bump_moments_vanish() {
        let k = catalog("s0-bump", &KernelParams { center: Some(2.0), width: Some(1.0), ..Default::default() }).unwrap();
        for m in moments(&k, k.moment_cap().unwrap()).unwrap() {
            assert!(m.value().norm() < 1e-6);
        }
        assert_eq!(analyze(&k, &AnalyzeOptions::default()).first_nonvanishing_moment_order, None);
    }

    #[test]
    fn strong_bound_holds_on_ball() {
        for k in [gaussian_heat(1).unwrap(), mexican_hat(1).unwrap(), heat_symbol(1.0, 4).unwrap()] {
            let s = strong_nondegeneracy(&k, 12, &[0.5, 1.0, 2.0]).unwrap();
            for i in 1..=2000 {
                let u = s.r * i as f64 / 2000.0;
                for v in [u, -u] {
                    assert!(k.spectrum_at1(v).norm() >= s.c * u.powi(s.n as i32) * (1.0 - 1e-9));
                }
            }
        }
    }

    #[test]
    fn closed_form_derivatives() {
        let g = gaussian_heat(1).unwrap();
        let h = 1e-4;
        for &t in &[-2.0, 0.3, 1.7] {
            let fd = (g.value_at(t + h) - g.value_at(t - h)) / (2.0 * h);
            assert!((fd - g.deriv_at(1, t)).norm() < 1e-8);
            let fd2 = (g.deriv_at(2, t + h) - g.deriv_at(2, t - h)) / (2.0 * h);
            assert!((fd2 - g.deriv_at(3, t)).norm() < 1e-7);
        }
        let b = compact_bump().unwrap();
        let mass = integrate_line(&|t: f64| if t.abs() < 1.0 { (-1.0 / (1.0 - t * t)).exp() } else { 0.0 }, 1.0, 1e-14);
        for &t in &[-0.6f64, 0.0, 0.45] {
            let exact = (-1.0 / (1.0 - t * t)).exp() * (-2.0 * t / (1.0 - t * t).powi(2)) / mass;
            assert!((b.deriv_at(1, t).re - exact).abs() < 1e-8, "{t}");
        }
        assert_eq!(b.value_at(1.5), ZERO);
        let p = psi1().unwrap();
        let fd = (p.value_at(0.5 + h) - p.value_at(0.5 - h)) / (2.0 * h);
        assert!((fd - p.deriv_at(1, 0.5)).norm() < 1e-8);
    }

    #[test]
    fn transformations() {
        let g = gaussian_heat(1).unwrap();
        let t = g.translated(&[0.75]).unwrap();
        assert!((moment(&t, 1).re - 0.75).abs() < 1e-9);
        assert!((t.value_at(0.75) - g.value_at(0.0)).norm() < 1e-15);
        let d = g.dilated(2.0).unwrap();
        assert!((d.spectrum_at1(0.5) - g.spectrum_at1(1.0)).norm() < 1e-15);
        assert!((moment(&d, 2).re - 8.0).abs() < 1e-7);
        assert!((d.deriv_at(1, 0.4) - g.deriv_at(1, 0.2) / 4.0).norm() < 1e-15);
        let c = t.reflected_conjugate().unwrap();
        assert!((moment(&c, 1).re + 0.75).abs() < 1e-9);
        assert!((c.value_at(-0.75) - g.value_at(0.0)).norm() < 1e-15);
        let r = t.reflected().unwrap();
        assert!((moment(&r, 1).re + 0.75).abs() < 1e-9);
        assert!((r.deriv_at(1, -0.5) + t.deriv_at(1, 0.5)).norm() < 1e-15);
        assert!((r.spectrum_at1(0.3) - t.spectrum_at1(-0.3)).norm() < 1e-15);
        let h = mexican_hat(1).unwrap();
        let s = Kernel::combine(Complex64::new(2.0, 0.0), &g, Complex64::new(1.0, 0.0), &h).unwrap();
        assert!((moment(&s, 2).re - (4.0 - 2.0 * (2.0 * PI).sqrt())).abs() < 1e-7);
    }

    #[test]
    fn sidecar_round_trip() {
        let dir = std::env::temp_dir().join(format!("tsl-kernel-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let k = gaussian_heat(1).unwrap();
        let r = analyze(&k, &AnalyzeOptions::default());
        save_kernel(&k, &r, &dir.join("g")).unwrap();
        let back: KernelReport = serde_json::from_str(&std::fs::read_to_string(dir.join("g.json")).unwrap()).unwrap();
        assert_eq!(back, r);
        let (grid, m, v) = crate::io::load_tbrg1(&dir.join("g.tbrg")).unwrap();
        assert_eq!(m, 2);
        assert_eq!(grid, *k.grid());
        assert_eq!(v[2 * 1024], k.spatial()[1024].re);
        std::fs::remove_dir_all(&dir).ok();
    }

    fn random_spectrum(bumps: &[(f64, f64, f64)], zero_below: f64) -> (UniformGrid, Vec<Complex64>) {
        let grid = UniformGrid::centered_line(40.0, 2048).unwrap();
        let sp = (0..grid.len())
            .map(|k| {
                let u = grid.frequency(k)[0];
                if u.abs() < zero_below {
                    return ZERO;
                }
                real(bumps.iter().map(|(c, w, a)| a * (-((u - c) / w).powi(2)).exp()).sum())
            })
            .collect();
        (grid, sp)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn strong_implies_nondegenerate(
            bumps in prop::collection::vec((-6.0f64..6.0, 0.3f64..2.0, 0.1f64..1.0), 1..4),
            gap in prop_oneof![Just(0.0), 0.0f64..2.0],
        ) {
            let (grid, sp) = random_spectrum(&bumps, gap);
            if let Some(_s) = spectrum_strong(&sp, &grid, 2, 12, &[0.5, 1.0], None) {
                prop_assert!(spectrum_is_nondegenerate(&sp, &grid, 2, SUPPORT_TOL));
            }
        }

        #[test]
        fn tau_monotone_under_truncation(
            bumps in prop::collection::vec((-6.0f64..6.0, 0.3f64..2.0, 0.1f64..1.0), 1..4),
            a in 0.1f64..3.0,
        ) {
            let (grid, sp) = random_spectrum(&bumps, 0.0);
            let (_, cut) = random_spectrum(&bumps, a);
            if let (Ok(t), Ok(t2)) = (spectrum_tau(&sp, &grid, 2, SUPPORT_TOL), spectrum_tau(&cut, &grid, 2, SUPPORT_TOL)) {
                prop_assert!(t2.value >= t.value.min(a) - t.uncertainty);
            }
        }

        #[test]
        fn ideal_membership_is_monotone(shift in -1.0f64..1.0, which in 0usize..3, d in 0usize..4) {
            let base = match which {
                0 => gaussian_heat(1).unwrap(),
                1 => mexican_hat(1).unwrap(),
                _ => psi1().unwrap(),
            };
            let k = base.translated(&[shift]).unwrap();
            if is_in_moment_ideal_Pd(&k, d, 1e-8).unwrap() {
                for dd in 0..=d {
                    prop_assert!(is_in_moment_ideal_Pd(&k, dd, 1e-8).unwrap());
                }
            }
        }
    }
}
