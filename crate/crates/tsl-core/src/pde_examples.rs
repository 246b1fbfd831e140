//! Symbol-driven Cauchy problems and cone-supported Laplace transforms as regularizing transforms.

use crate::error::{Result, TslError};
use crate::grid::{forward_spectrum, inverse_spectrum, EdgeCheck, ScaleLadder, UniformGrid};
use crate::kernels::{Kernel, SpectrumFn};
use crate::numerics::{factorial, lagrange_equispaced, smooth_transition};
use crate::signals::{Signal, SmoothPart, WaveTerm};
use crate::transform::regularize;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Multiplier magnitude at the Nyquist frequency above which an evolution aliases.
pub const ALIAS_TOL: f64 = 1e-12;
pub const COMPARISON_TOL: f64 = 1e-6;
/// The half-line kernel equals `e^{P(iu)}` for `u ≥ −OFF_CONE_FLAT`.
pub const OFF_CONE_FLAT: f64 = 2.5;
/// Width of the off-cone cutoff of the half-line kernel.
pub const OFF_CONE: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Cone {
    /// All of ℝ.
    Line,
    /// `[0, ∞)`.
    HalfLine,
}

impl Cone {
    fn directions(&self) -> &'static [f64] {
        match self {
            Cone::Line => &[-1.0, 1.0],
            Cone::HalfLine => &[1.0],
        }
    }
}

/// Homogeneous symbol `P(ξ) = c ξ^d` acting as `P(∂/∂x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Symbol {
    pub coeff: Complex64,
    pub degree: u32,
    pub cone: Cone,
}

impl Symbol {
    /// `P(ξ) = ξ²`: the heat equation.
    pub fn heat() -> Symbol {
        Symbol { coeff: Complex64::new(1.0, 0.0), degree: 2, cone: Cone::Line }
    }

    /// `P(ξ) = iξ` on `[0, ∞)`: the Laplace transform in direction `ω = 1`.
    pub fn laplace() -> Symbol {
        Symbol { coeff: I, degree: 1, cone: Cone::HalfLine }
    }

    pub fn at_iu(&self, u: f64) -> Complex64 {
        self.coeff * (I * u).powu(self.degree)
    }

    /// `Re P(iu) < 0` along every ray of the cone.
    pub fn check(&self) -> Result<()> {
        if self.degree == 0 {
            return Err(TslError::InvalidParameter("degree must be positive".into()));
        }
        for &d in self.cone.directions() {
            if !(self.at_iu(d).re < 0.0) {
                return Err(TslError::ConeViolation { direction: vec![d] });
            }
        }
        Ok(())
    }

    /// Kernel with `φ̂(u) = e^{P(iu)}` on the cone, kept on `[−2.5, 0]` and cut off over `[−4.5, −2.5]`.
    pub fn kernel(&self) -> Result<Kernel> {
        self.check()?;
        let s = *self;
        let spec: SpectrumFn = Arc::new(move |u: &[f64]| {
            let v = u[0];
            match s.cone {
                Cone::Line => s.at_iu(v).exp(),
                Cone::HalfLine if v <= -OFF_CONE_FLAT - OFF_CONE => ZERO,
                Cone::HalfLine => {
                    let w = 1.0 - smooth_transition((-v - OFF_CONE_FLAT) / OFF_CONE);
                    s.at_iu(v).exp() * w
                }
            }
        });
        let grid = match self.cone {
            Cone::Line => UniformGrid::centered_line(40.0, 2048)?,
            Cone::HalfLine => UniformGrid::centered_line(819.2, 16384)?,
        };
        Kernel::from_spectrum("symbol", grid, spec, None, EdgeCheck::default())
    }
}

fn check_cone_support(f: &Signal, cone: Cone) -> Result<()> {
    if cone == Cone::Line {
        return Ok(());
    }
    if let Some(w) = f.waves.iter().find(|w| w.frequency < 0.0) {
        return Err(TslError::SupportViolation(format!("wave at frequency {}", w.frequency)));
    }
    if !f.diracs.is_empty() {
        return Err(TslError::SupportViolation("a Dirac term has full spectral support".into()));
    }
    if let Some(s) = &f.smooth {
        let ax = s.grid.axis(0);
        for v in &s.values {
            let hat = forward_spectrum(v, &s.grid, EdgeCheck::Waive)?;
            let total: f64 = hat.iter().map(|h| h.norm_sqr()).sum();
            let neg: f64 = hat.iter().enumerate().filter(|(k, _)| ax.u(*k) < 0.0).map(|(_, h)| h.norm_sqr()).sum();
            if neg > 1e-8 * total {
                return Err(TslError::SupportViolation(format!("spectral mass {:.3e} at negative frequencies", neg / total)));
            }
        }
    }
    Ok(())
}

fn padded(grid: &UniformGrid) -> Result<UniformGrid> {
    let a = grid.axis(0);
    let total = (2 * a.count).next_power_of_two();
    let extra = (total - a.count) / 2;
    UniformGrid::line(a.origin - extra as f64 * a.spacing, a.spacing, total)
}

fn alias_check(pg: &UniformGrid, mult: &dyn Fn(f64) -> Complex64, order: u32) -> Result<()> {
    let nyq = pg.axis(0).nyquist();
    let edge = mult(nyq).norm().max(mult(-nyq).norm()) * nyq.powi(order as i32);
    if edge > ALIAS_TOL {
        return Err(TslError::Precondition(format!(
            "evolved spectrum is {edge:.3e} at the Nyquist frequency; refine the grid"
        )));
    }
    Ok(())
}

/// `Û(·,t) = f̂ e^{tP(iu)}`: exact for wave and polynomial parts, spectral on `grid` for Dirac
/// and sampled parts.
pub fn heat_evolve(f: &Signal, t: f64, p: &Symbol, grid: &UniformGrid) -> Result<Signal> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(TslError::InvalidParameter(format!("t = {t} must be positive")));
    }
    p.check()?;
    f.validate()?;
    if grid.dim() != 1 {
        return Err(TslError::InvalidParameter("evolution is one-dimensional".into()));
    }
    check_cone_support(f, p.cone)?;
    let mult = |u: f64| (p.at_iu(u) * t).exp();
    let mut out = Signal::zero(f.m);
    out.waves = f
        .waves
        .iter()
        .map(|w| WaveTerm {
            frequency: w.frequency,
            amplitude: w.amplitude.iter().map(|a| a * mult(w.frequency)).collect(),
        })
        .collect();
    // e^{tP(∂)} x^k = Σ_j (tc)^j / j! ∂^{dj} x^k
    let d = p.degree as usize;
    let mut poly = vec![vec![ZERO; f.m]; f.poly.len()];
    for (k, coeffs) in f.poly.iter().enumerate() {
        for j in 0..=k / d {
            let drop = d * j;
            let fac = (p.coeff * t).powu(j as u32) / factorial(j) * (factorial(k) / factorial(k - drop));
            for c in 0..f.m {
                poly[k - drop][c] += coeffs[c] * fac;
            }
        }
    }
    out.poly = poly;
    let ga = *grid.axis(0);
    let mut values = vec![vec![ZERO; ga.count]; f.m];
    let mut sampled = false;
    let mut waived = false;
    if !f.diracs.is_empty() {
        sampled = true;
        let pg = padded(grid)?;
        let pa = *pg.axis(0);
        let top = f.diracs.iter().map(|d| d.order).max().unwrap_or(0) as u32;
        alias_check(&pg, &mult, top)?;
        let offset = (ga.origin - pa.origin) / pa.spacing;
        let offset = offset.round() as usize;
        for c in 0..f.m {
            let spec: Vec<Complex64> = (0..pa.count)
                .map(|k| {
                    let u = pa.u(k);
                    let m = mult(u);
                    f.diracs
                        .iter()
                        .map(|dt| dt.weight[c] * (I * u).powu(dt.order as u32) * Complex64::from_polar(1.0, -u * dt.location))
                        .sum::<Complex64>()
                        * m
                })
                .collect();
            let vals = inverse_spectrum(&spec, &pg);
            for i in 0..ga.count {
                values[c][i] += vals[offset + i];
            }
        }
    }
    if let Some(s) = &f.smooth {
        sampled = true;
        waived = s.edge_waived;
        let pg = padded(&s.grid)?;
        let pa = *pg.axis(0);
        let extra = ((s.grid.axis(0).origin - pa.origin) / pa.spacing).round() as usize;
        for c in 0..f.m {
            let mut w = vec![ZERO; pa.count];
            w[extra..extra + s.grid.len()].copy_from_slice(&s.values[c]);
            let hat = forward_spectrum(&w, &pg, EdgeCheck::Waive)?;
            let prod: Vec<Complex64> = hat.iter().enumerate().map(|(k, h)| h * mult(pa.u(k))).collect();
            let conv = inverse_spectrum(&prod, &pg);
            for (i, v) in values[c].iter_mut().enumerate() {
                let x = ga.x(i);
                if x >= pa.origin && x <= pa.last() {
                    *v += lagrange_equispaced(&conv, pa.origin, pa.spacing, x, 8);
                }
            }
        }
    }
    if sampled {
        let edge = if waived { EdgeCheck::Waive } else { EdgeCheck::default() };
        let s = Signal::smooth_components(grid.clone(), values, edge)?;
        out.smooth = s.smooth;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatComparison {
    pub t: f64,
    pub y: f64,
    /// `max_x |U(x,t) − M_φ^f(x, t^{1/d})|`.
    pub discrepancy: f64,
    pub peak: f64,
    pub passed: bool,
    /// `(x, evolved, transformed)` rows for the first component.
    pub rows: Vec<(f64, Complex64, Complex64)>,
}

impl HeatComparison {
    pub fn csv(&self) -> String {
        let mut s = String::from("x,evolved_re,evolved_im,transform_re,transform_im\n");
        for (x, a, b) in &self.rows {
            s.push_str(&format!("{x:.12e},{:.12e},{:.12e},{:.12e},{:.12e}\n", a.re, a.im, b.re, b.im));
        }
        s
    }
}

/// Compares the evolution at time `t` with the transform at `y = t^{1/d}` under `φ̂ = e^{P(i·)}`.
pub fn heat_as_regularization(f: &Signal, t: f64, p: &Symbol, grid: &UniformGrid) -> Result<HeatComparison> {
    let phi = p.kernel()?;
    let y = t.powf(1.0 / p.degree as f64);
    let evolved = heat_evolve(f, t, p, grid)?.sample(grid);
    let field = regularize(f, &phi, grid, &ScaleLadder::explicit(vec![y])?)?;
    let mut discrepancy = 0.0f64;
    let mut peak = 0.0f64;
    for c in 0..f.m {
        for (i, e) in evolved[c].iter().enumerate() {
            discrepancy = discrepancy.max((e - field.value(0, c, i)).norm());
            peak = peak.max(e.norm());
        }
    }
    let rows = (0..grid.len()).map(|i| (grid.axis(0).x(i), evolved[0][i], field.value(0, 0, i))).collect();
    Ok(HeatComparison { t, y, discrepancy, peak, passed: discrepancy <= COMPARISON_TOL, rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplaceValue {
    pub x: f64,
    pub sigma: f64,
    /// `⟨h(u), e^{izu}⟩`, `z = x + iσ`.
    pub direct: Vec<Complex64>,
    /// `M_{φ_ω}^f(x, σ)` with `f̂ = 2πh`.
    pub transform: Vec<Complex64>,
    pub discrepancy: f64,
    pub passed: bool,
}

/// `f` with `f̂ = 2πh`: the smooth samples of `h` become waves, Dirac masses at `u₀` become waves
/// of frequency `u₀` and derivatives at the vertex become polynomials `(−ix)^m`.
pub fn laplace_preimage(h: &Signal) -> Result<Signal> {
    check_laplace_support(h)?;
    let mut f = Signal::zero(h.m);
    if let Some(s) = &h.smooth {
        let a = s.grid.axis(0);
        let w = crate::grid::trapezoid_weights(a);
        for j in 0..a.count {
            if s.values.iter().any(|v| v[j] != ZERO) {
                f.waves.push(WaveTerm { frequency: a.x(j), amplitude: s.values.iter().map(|v| v[j] * w[j]).collect() });
            }
        }
    }
    for d in &h.diracs {
        if d.order == 0 {
            f.waves.push(WaveTerm { frequency: d.location, amplitude: d.weight.iter().map(|w| Complex64::new(*w, 0.0)).collect() });
        } else if d.location == 0.0 {
            if f.poly.len() <= d.order {
                f.poly.resize(d.order + 1, vec![ZERO; h.m]);
            }
            for c in 0..h.m {
                f.poly[d.order][c] += d.weight[c] * (-I).powu(d.order as u32);
            }
        } else {
            return Err(TslError::InvalidParameter(format!("Dirac derivative at {} off the vertex", d.location)));
        }
    }
    Ok(f)
}

fn check_laplace_support(h: &Signal) -> Result<()> {
    h.validate()?;
    if h.poly_degree().is_some() || !h.waves.is_empty() {
        return Err(TslError::SupportViolation("polynomial and wave parts are not supported in [0, ∞)".into()));
    }
    if let Some(d) = h.diracs.iter().find(|d| d.location < 0.0) {
        return Err(TslError::SupportViolation(format!("Dirac term at {}", d.location)));
    }
    if let Some((lo, _)) = h.smooth.as_ref().and_then(SmoothPart::support) {
        if lo < 0.0 {
            return Err(TslError::SupportViolation(format!("sampled part nonzero at {lo}")));
        }
    }
    Ok(())
}

/// `⟨h(u), e^{izu}⟩`: trapezoid sum over the samples, `(−1)^m (iz)^m e^{izu₀}` for Dirac terms.
pub fn laplace_direct(h: &Signal, z: Complex64) -> Vec<Complex64> {
    let mut out = vec![ZERO; h.m];
    if let Some(s) = &h.smooth {
        let a = s.grid.axis(0);
        let w = crate::grid::trapezoid_weights(a);
        let e: Vec<Complex64> = (0..a.count).map(|j| (I * z * a.x(j)).exp() * w[j]).collect();
        for (c, o) in out.iter_mut().enumerate() {
            *o += s.values[c].iter().zip(&e).map(|(v, e)| v * e).sum::<Complex64>();
        }
    }
    for d in &h.diracs {
        let v = (-I * z).powu(d.order as u32) * (I * z * d.location).exp();
        for (c, o) in out.iter_mut().enumerate() {
            *o += d.weight[c] * v;
        }
    }
    out
}

/// `L{h; x + iσ}` by direct pairing and as a transform value.
pub fn laplace_transform_cone(h: &Signal, x: f64, sigma: f64) -> Result<LaplaceValue> {
    laplace_batch(h, &[(x, sigma)]).map(|mut v| v.remove(0))
}

/// [`laplace_transform_cone`] at several points, building the kernel and the preimage once.
pub fn laplace_batch(h: &Signal, points: &[(f64, f64)]) -> Result<Vec<LaplaceValue>> {
    check_laplace_support(h)?;
    if let Some(&(_, s)) = points.iter().find(|p| !(p.1 > 0.0)) {
        return Err(TslError::InvalidParameter(format!("σ = {s} must be positive")));
    }
    let kernel = Symbol::laplace().kernel()?;
    let f = laplace_preimage(h)?;
    points
        .iter()
        .map(|&(x, sigma)| {
            let z = Complex64::new(x, sigma);
            let direct = laplace_direct(h, z);
            let grid = UniformGrid::line(x, 1.0, 8)?;
            let field = regularize(&f, &kernel, &grid, &ScaleLadder::explicit(vec![sigma])?)?;
            let transform: Vec<Complex64> = (0..h.m).map(|c| field.value(0, c, 0)).collect();
            let discrepancy = direct.iter().zip(&transform).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            Ok(LaplaceValue { x, sigma, direct, transform, discrepancy, passed: discrepancy <= COMPARISON_TOL })
        })
        .collect()
}

/// Largest `|i ∂_x L − ∂_σ L|` over the points, by central differences of step `step`,
/// relative to the largest `|∂_x L|`.
pub fn laplace_cr_residual(h: &Signal, points: &[(f64, f64)], step: f64) -> Result<f64> {
    let mut probes = vec![];
    for &(x, s) in points {
        probes.extend([(x + step, s), (x - step, s), (x, s + step), (x, s - step)]);
    }
    let v = laplace_batch(h, &probes)?;
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for k in 0..points.len() {
        let b = 4 * k;
        for c in 0..h.m {
            let dx = (v[b].transform[c] - v[b + 1].transform[c]) / (2.0 * step);
            let ds = (v[b + 2].transform[c] - v[b + 3].transform[c]) / (2.0 * step);
            worst = worst.max((I * dx - ds).norm());
            scale = scale.max(dx.norm());
        }
    }
    Ok(if scale > 0.0 { worst / scale } else { worst })
}
