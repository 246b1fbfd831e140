//! Finite stand-ins for vector-valued tempered distributions on the line:
//! a gridded smooth part plus symbolic Dirac, polynomial and exponential parts.

use crate::error::{Result, TslError};
use crate::grid::{check_edges, Axis, EdgeCheck, UniformGrid};
use crate::kernels::{moments, Kernel};
use crate::numerics::{binomial, lagrange_equispaced};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub const MAX_DIRAC_ORDER: usize = 6;
pub const MAX_POLY_DEGREE: usize = 8;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothPart {
    pub grid: UniformGrid,
    /// `values[component][point]`.
    pub values: Vec<Vec<Complex64>>,
    /// Set for parts that do not decay at the grid edge (e.g. growth demos).
    #[serde(default)]
    pub edge_waived: bool,
}

impl SmoothPart {
    /// Value at `x` by 8-point interpolation; zero outside the grid.
    pub fn value_at(&self, c: usize, x: f64) -> Complex64 {
        let a = self.grid.axis(0);
        if x < a.origin || x > a.last() {
            return ZERO;
        }
        lagrange_equispaced(&self.values[c], a.origin, a.spacing, x, 8)
    }

    /// Smallest interval containing every nonzero sample, if any.
    pub fn support(&self) -> Option<(f64, f64)> {
        let a = self.grid.axis(0);
        let nz: Vec<usize> = (0..a.count)
            .filter(|&i| self.values.iter().any(|v| v[i] != ZERO))
            .collect();
        Some((a.x(*nz.first()?), a.x(*nz.last()?)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiracTerm {
    pub location: f64,
    pub order: usize,
    pub weight: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveTerm {
    pub frequency: f64,
    pub amplitude: Vec<Complex64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Signal {
    pub m: usize,
    #[serde(default)]
    pub smooth: Option<SmoothPart>,
    #[serde(default)]
    pub diracs: Vec<DiracTerm>,
    /// `poly[d][component]` is the coefficient of `x^d`.
    #[serde(default)]
    pub poly: Vec<Vec<Complex64>>,
    #[serde(default)]
    pub waves: Vec<WaveTerm>,
}

fn cr(v: f64) -> Complex64 {
    Complex64::new(v, 0.0)
}

impl Signal {
    pub fn zero(m: usize) -> Signal {
        Signal { m, smooth: None, diracs: vec![], poly: vec![], waves: vec![] }
    }

    /// `δ^{(order)}(· − location)`.
    pub fn dirac(location: f64, order: usize) -> Signal {
        Signal { diracs: vec![DiracTerm { location, order, weight: vec![1.0] }], ..Signal::zero(1) }
    }

    /// Σ coeffs[d] x^d.
    pub fn polynomial(coeffs: &[f64]) -> Signal {
        Signal { poly: coeffs.iter().map(|&c| vec![cr(c)]).collect(), ..Signal::zero(1) }
    }

    pub fn wave(frequency: f64, amplitude: Complex64) -> Signal {
        Signal { waves: vec![WaveTerm { frequency, amplitude: vec![amplitude] }], ..Signal::zero(1) }
    }

    /// `a·cos(ωx)`.
    pub fn cosine(frequency: f64, a: f64) -> Signal {
        Signal::wave(frequency, cr(a / 2.0)).add(&Signal::wave(-frequency, cr(a / 2.0))).unwrap()
    }

    pub fn smooth(grid: UniformGrid, values: &[f64], edge: EdgeCheck) -> Result<Signal> {
        Signal::smooth_components(grid, vec![values.iter().map(|&v| cr(v)).collect()], edge)
    }

    pub fn smooth_components(grid: UniformGrid, values: Vec<Vec<Complex64>>, edge: EdgeCheck) -> Result<Signal> {
        if grid.dim() != 1 {
            return Err(TslError::InvalidParameter("signals are one-dimensional".into()));
        }
        if values.is_empty() || values.iter().any(|v| v.len() != grid.len()) {
            return Err(TslError::InvalidParameter("smooth part does not match its grid".into()));
        }
        let m = values.len();
        check_edges(&grid, |i| values.iter().map(|v| v[i].norm()).fold(0.0, f64::max), edge)?;
        let edge_waived = matches!(edge, EdgeCheck::Waive);
        Ok(Signal { smooth: Some(SmoothPart { grid, values, edge_waived }), ..Signal::zero(m) })
    }

    /// Checks the structural invariants.
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(TslError::InvalidParameter("component count must be positive".into()));
        }
        if self.poly.len() > MAX_POLY_DEGREE + 1 {
            return Err(TslError::InvalidParameter(format!("polynomial degree above {MAX_POLY_DEGREE}")));
        }
        if self.poly.iter().any(|c| c.len() != self.m)
            || self.waves.iter().any(|w| w.amplitude.len() != self.m)
            || self.diracs.iter().any(|d| d.weight.len() != self.m)
        {
            return Err(TslError::InvalidParameter("parts disagree on the component count".into()));
        }
        if self.diracs.iter().any(|d| d.order > MAX_DIRAC_ORDER) {
            return Err(TslError::InvalidParameter(format!("Dirac order above {MAX_DIRAC_ORDER}")));
        }
        if let Some(s) = &self.smooth {
            if s.grid.dim() != 1 || s.values.len() != self.m || s.values.iter().any(|v| v.len() != s.grid.len()) {
                return Err(TslError::InvalidParameter("smooth part does not match its grid".into()));
            }
            if !s.edge_waived {
                check_edges(
                    &s.grid,
                    |i| s.values.iter().map(|v| v[i].norm()).fold(0.0, f64::max),
                    EdgeCheck::default(),
                )?;
            }
        }
        Ok(())
    }

    pub fn add(&self, other: &Signal) -> Result<Signal> {
        if self.m != other.m {
            return Err(TslError::InvalidParameter("component counts differ".into()));
        }
        let smooth = match (&self.smooth, &other.smooth) {
            (None, None) => None,
            (Some(a), None) | (None, Some(a)) => Some(a.clone()),
            (Some(a), Some(b)) => {
                if !a.grid.approx_eq(&b.grid) {
                    return Err(TslError::InvalidParameter("smooth parts live on different grids".into()));
                }
                Some(SmoothPart {
                    grid: a.grid.clone(),
                    values: a
                        .values
                        .iter()
                        .zip(&b.values)
                        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + q).collect())
                        .collect(),
                    edge_waived: a.edge_waived || b.edge_waived,
                })
            }
        };
        let deg = self.poly.len().max(other.poly.len());
        let poly = (0..deg)
            .map(|d| {
                (0..self.m)
                    .map(|c| {
                        self.poly.get(d).map_or(ZERO, |v| v[c]) + other.poly.get(d).map_or(ZERO, |v| v[c])
                    })
                    .collect()
            })
            .collect();
        Ok(Signal {
            m: self.m,
            smooth,
            diracs: self.diracs.iter().chain(&other.diracs).cloned().collect(),
            poly,
            waves: self.waves.iter().chain(&other.waves).cloned().collect(),
        })
    }

    /// Multiplies every part by a real scalar.
    pub fn scaled(&self, s: f64) -> Signal {
        let mut out = self.clone();
        if let Some(sm) = &mut out.smooth {
            sm.values.iter_mut().flatten().for_each(|v| *v *= s);
        }
        out.diracs.iter_mut().for_each(|d| d.weight.iter_mut().for_each(|w| *w *= s));
        out.poly.iter_mut().flatten().for_each(|v| *v *= s);
        out.waves.iter_mut().for_each(|w| w.amplitude.iter_mut().for_each(|a| *a *= s));
        out
    }

    /// `f(· − h)`.
    pub fn translate(&self, h: f64) -> Result<Signal> {
        let mut out = self.clone();
        if let Some(sm) = &mut out.smooth {
            let a = sm.grid.axis(0);
            sm.grid = UniformGrid::new(vec![Axis::new(a.origin + h, a.spacing, a.count)?])?;
        }
        out.diracs.iter_mut().for_each(|d| d.location += h);
        out.waves.iter_mut().for_each(|w| {
            let ph = Complex64::from_polar(1.0, -w.frequency * h);
            w.amplitude.iter_mut().for_each(|a| *a *= ph);
        });
        let deg = self.poly.len();
        out.poly = (0..deg)
            .map(|j| {
                (0..self.m)
                    .map(|c| {
                        (j..deg)
                            .map(|d| self.poly[d][c] * binomial(d, j) * (-h).powi((d - j) as i32))
                            .sum()
                    })
                    .collect()
            })
            .collect();
        Ok(out)
    }

    /// `f(·/a)`.
    pub fn dilate(&self, a: f64) -> Result<Signal> {
        if !(a.is_finite() && a > 0.0) {
            return Err(TslError::InvalidParameter("dilation must be positive".into()));
        }
        let mut out = self.clone();
        if let Some(sm) = &mut out.smooth {
            let ax = sm.grid.axis(0);
            sm.grid = UniformGrid::new(vec![Axis::new(ax.origin * a, ax.spacing * a, ax.count)?])?;
        }
        out.diracs.iter_mut().for_each(|d| {
            d.location *= a;
            let s = a.powi(1 + d.order as i32);
            d.weight.iter_mut().for_each(|w| *w *= s);
        });
        out.waves.iter_mut().for_each(|w| w.frequency /= a);
        out.poly.iter_mut().enumerate().for_each(|(d, v)| {
            let s = a.powi(-(d as i32));
            v.iter_mut().for_each(|c| *c *= s);
        });
        Ok(out)
    }

    pub fn has_singular_part(&self) -> bool {
        !self.diracs.is_empty()
    }

    pub fn poly_degree(&self) -> Option<usize> {
        self.poly.iter().rposition(|v| v.iter().any(|c| *c != ZERO))
    }

    pub fn poly_at(&self, c: usize, x: f64) -> Complex64 {
        self.poly.iter().rev().fold(ZERO, |acc, v| acc * x + v[c])
    }

    pub fn waves_at(&self, c: usize, x: f64) -> Complex64 {
        self.waves
            .iter()
            .map(|w| w.amplitude[c] * Complex64::from_polar(1.0, w.frequency * x))
            .sum()
    }

    /// Value of the regular (non-Dirac) parts at `x`.
    pub fn regular_at(&self, c: usize, x: f64) -> Complex64 {
        self.smooth.as_ref().map_or(ZERO, |s| s.value_at(c, x)) + self.poly_at(c, x) + self.waves_at(c, x)
    }

    /// Regular parts sampled on `grid`, `[component][point]`.
    pub fn sample(&self, grid: &UniformGrid) -> Vec<Vec<Complex64>> {
        (0..self.m)
            .map(|c| (0..grid.len()).map(|i| self.regular_at(c, grid.point(i)[0])).collect())
            .collect()
    }

    /// Closed interval outside of which `f` vanishes, or `None` if `f` has unbounded support.
    pub fn support(&self) -> Option<Option<(f64, f64)>> {
        if self.poly_degree().is_some() || self.waves.iter().any(|w| w.amplitude.iter().any(|a| *a != ZERO)) {
            return None;
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for d in &self.diracs {
            lo = lo.min(d.location);
            hi = hi.max(d.location);
        }
        if let Some((a, b)) = self.smooth.as_ref().and_then(|s| s.support()) {
            lo = lo.min(a);
            hi = hi.max(b);
        }
        Some(if lo <= hi { Some((lo, hi)) } else { None })
    }
}

/// `⟨f, ρ⟩` per component.
pub fn pair(signal: &Signal, rho: &Kernel) -> Result<Vec<Complex64>> {
    if rho.dim() != 1 {
        return Err(TslError::InvalidParameter("pairing is one-dimensional".into()));
    }
    signal.validate()?;
    let mut out = vec![ZERO; signal.m];
    if let Some(s) = &signal.smooth {
        let a = s.grid.axis(0);
        let w = crate::grid::trapezoid_weights(a);
        let r: Vec<Complex64> = (0..a.count).map(|i| rho.value_at(a.x(i))).collect();
        for (c, o) in out.iter_mut().enumerate() {
            *o += s.values[c].iter().zip(&r).zip(&w).map(|((f, r), w)| f * r * *w).sum::<Complex64>();
        }
    }
    for d in &signal.diracs {
        let sign = if d.order % 2 == 0 { 1.0 } else { -1.0 };
        let v = rho.deriv_at(d.order, d.location) * sign;
        for (c, o) in out.iter_mut().enumerate() {
            *o += v * d.weight[c];
        }
    }
    if let Some(deg) = signal.poly_degree() {
        let mom = moments(rho, deg)?;
        for (dd, coeffs) in signal.poly.iter().enumerate().take(deg + 1) {
            for (c, o) in out.iter_mut().enumerate() {
                *o += coeffs[c] * mom[dd].value();
            }
        }
    }
    for wv in &signal.waves {
        let v = rho.spectrum_at1(-wv.frequency);
        for (c, o) in out.iter_mut().enumerate() {
            *o += wv.amplitude[c] * v;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "param", rename_all = "kebab-case")]
pub enum NormKind {
    Lp(f64),
    Cb,
    Uc,
    WeightedSup(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ComponentNorm {
    L1,
    #[default]
    L2,
    LInf,
}

impl ComponentNorm {
    pub fn apply(&self, v: &[Complex64]) -> f64 {
        match self {
            ComponentNorm::L1 => v.iter().map(|c| c.norm()).sum(),
            ComponentNorm::L2 => v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt(),
            ComponentNorm::LInf => v.iter().map(|c| c.norm()).fold(0.0, f64::max),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormSpec {
    pub kind: NormKind,
    #[serde(default)]
    pub component_norm: ComponentNorm,
}

impl NormSpec {
    pub fn new(kind: NormKind) -> NormSpec {
        NormSpec { kind, component_norm: ComponentNorm::L2 }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            NormKind::Lp(p) if !(p >= 1.0) => Err(TslError::InvalidParameter(format!("p = {p} below 1"))),
            NormKind::WeightedSup(n) if !(n >= 0.0) => Err(TslError::InvalidParameter(format!("N = {n} negative"))),
            _ => Ok(()),
        }
    }

    pub fn is_sup(&self) -> bool {
        !matches!(self.kind, NormKind::Lp(p) if p.is_finite())
    }
}

/// Discrete norm of gridded values `[component][point]`.
pub fn norm(values: &[Vec<Complex64>], grid: &UniformGrid, spec: &NormSpec) -> f64 {
    let pointwise: Vec<f64> = (0..grid.len())
        .map(|i| {
            let v: Vec<Complex64> = values.iter().map(|c| c[i]).collect();
            spec.component_norm.apply(&v)
        })
        .collect();
    norm_of_pointwise(&pointwise, grid, spec)
}

pub fn norm_of_pointwise(pointwise: &[f64], grid: &UniformGrid, spec: &NormSpec) -> f64 {
    match spec.kind {
        NormKind::Lp(p) if p.is_finite() => {
            let w = crate::grid::trapezoid_weights(grid.axis(0));
            pointwise.iter().zip(&w).map(|(v, w)| v.powf(p) * w).sum::<f64>().powf(1.0 / p)
        }
        NormKind::WeightedSup(n) => pointwise
            .iter()
            .enumerate()
            .map(|(i, v)| v * (1.0 + grid.point(i)[0].abs()).powf(-n))
            .fold(0.0, f64::max),
        _ => pointwise.iter().copied().fold(0.0, f64::max),
    }
}
