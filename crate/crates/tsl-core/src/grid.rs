//! Uniform grids, their spectral duals, quadrature and log-spaced scale ladders.
//!
//! The discrete transform is scaled to approximate the continuous one,
//! `û(u) = ∫ φ(t) e^{-iut} dt`, with the phase of the grid origin restored.
//! Frequencies are centered: `u_k = (k - N/2) Δu` with `Δu = 2π / (N Δx)`.

use crate::error::{Result, TslError};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

pub const DEFAULT_EDGE_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_POINTS: usize = 1 << 22;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub origin: f64,
    pub spacing: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(origin: f64, spacing: f64, count: usize) -> Result<Self> {
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(TslError::InvalidGrid(format!("spacing must be positive, got {spacing}")));
        }
        if !origin.is_finite() {
            return Err(TslError::InvalidGrid("origin must be finite".into()));
        }
        if count < 8 || !count.is_power_of_two() {
            return Err(TslError::InvalidGrid(format!(
                "count must be a power of two >= 8, got {count}"
            )));
        }
        Ok(Axis { origin, spacing, count })
    }

    /// Axis with `count` points of spacing `spacing` whose point `count/2` sits at 0.
    pub fn centered(count: usize, spacing: f64) -> Result<Self> {
        Axis::new(-((count / 2) as f64) * spacing, spacing, count)
    }

    pub fn x(&self, j: usize) -> f64 {
        self.origin + j as f64 * self.spacing
    }

    pub fn du(&self) -> f64 {
        2.0 * PI / (self.count as f64 * self.spacing)
    }

    pub fn u(&self, k: usize) -> f64 {
        (k as f64 - (self.count / 2) as f64) * self.du()
    }

    pub fn last(&self) -> f64 {
        self.x(self.count - 1)
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.count).map(|j| self.x(j)).collect()
    }

    pub fn frequencies(&self) -> Vec<f64> {
        (0..self.count).map(|k| self.u(k)).collect()
    }

    /// Largest |u| represented on the spectral grid.
    pub fn nyquist(&self) -> f64 {
        (self.count / 2) as f64 * self.du()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformGrid {
    axes: Vec<Axis>,
}

impl UniformGrid {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        Self::with_budget(axes, DEFAULT_MAX_POINTS)
    }

    pub fn with_budget(axes: Vec<Axis>, max_points: usize) -> Result<Self> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(TslError::InvalidGrid(format!(
                "dimension must be 1 or 2, got {}",
                axes.len()
            )));
        }
        for a in &axes {
            Axis::new(a.origin, a.spacing, a.count)?;
        }
        let total: usize = axes.iter().map(|a| a.count).product();
        if total > max_points {
            return Err(TslError::InvalidGrid(format!(
                "{total} points exceed the budget of {max_points}"
            )));
        }
        Ok(UniformGrid { axes })
    }

    pub fn line(origin: f64, spacing: f64, count: usize) -> Result<Self> {
        UniformGrid::new(vec![Axis::new(origin, spacing, count)?])
    }

    /// 1D grid of `count` points covering `[-half_width, half_width)`.
    pub fn centered_line(half_width: f64, count: usize) -> Result<Self> {
        let spacing = 2.0 * half_width / count as f64;
        UniformGrid::new(vec![Axis::centered(count, spacing)?])
    }

    pub fn centered_square(half_width: f64, count: usize) -> Result<Self> {
        let spacing = 2.0 * half_width / count as f64;
        let a = Axis::centered(count, spacing)?;
        UniformGrid::new(vec![a, a])
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn axis(&self, i: usize) -> &Axis {
        &self.axes[i]
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.count).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.count).collect()
    }

    /// Cell volume `Π Δx`.
    pub fn cell(&self) -> f64 {
        self.axes.iter().map(|a| a.spacing).product()
    }

    /// Coordinates of the flat (row-major) index `idx`.
    pub fn point(&self, idx: usize) -> Vec<f64> {
        match self.dim() {
            1 => vec![self.axes[0].x(idx)],
            _ => {
                let n1 = self.axes[1].count;
                vec![self.axes[0].x(idx / n1), self.axes[1].x(idx % n1)]
            }
        }
    }

    /// Frequency of the flat spectral index `idx`.
    pub fn frequency(&self, idx: usize) -> Vec<f64> {
        match self.dim() {
            1 => vec![self.axes[0].u(idx)],
            _ => {
                let n1 = self.axes[1].count;
                vec![self.axes[0].u(idx / n1), self.axes[1].u(idx % n1)]
            }
        }
    }

    pub fn spectral(&self) -> SpectralGrid {
        SpectralGrid {
            axes: self
                .axes
                .iter()
                .map(|a| SpectralAxis { du: a.du(), count: a.count })
                .collect(),
        }
    }

    pub fn approx_eq(&self, other: &UniformGrid) -> bool {
        self.dim() == other.dim()
            && self.axes.iter().zip(&other.axes).all(|(a, b)| {
                a.count == b.count
                    && (a.spacing - b.spacing).abs() <= 1e-12 * a.spacing
                    && (a.origin - b.origin).abs() <= 1e-9 * a.spacing
            })
    }

    /// Flat indices of the boundary points.
    fn boundary_indices(&self) -> Vec<usize> {
        match self.dim() {
            1 => vec![0, self.axes[0].count - 1],
            _ => {
                let (n0, n1) = (self.axes[0].count, self.axes[1].count);
                let mut v = Vec::with_capacity(2 * (n0 + n1));
                for j in 0..n1 {
                    v.push(j);
                    v.push((n0 - 1) * n1 + j);
                }
                for i in 1..n0 - 1 {
                    v.push(i * n1);
                    v.push(i * n1 + n1 - 1);
                }
                v
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralAxis {
    pub du: f64,
    pub count: usize,
}

impl SpectralAxis {
    pub fn u(&self, k: usize) -> f64 {
        (k as f64 - (self.count / 2) as f64) * self.du
    }
    pub fn extent(&self) -> f64 {
        (self.count / 2) as f64 * self.du
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralGrid {
    pub axes: Vec<SpectralAxis>,
}

impl SpectralGrid {
    /// Radius of the largest ball centered at 0 inside the spectral box
    /// (keeping one bin of margin for interpolation).
    pub fn inner_radius(&self) -> f64 {
        self.axes
            .iter()
            .map(|a| a.extent() - a.du)
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EdgeCheck {
    Enforce(f64),
    Waive,
}

impl Default for EdgeCheck {
    fn default() -> Self {
        EdgeCheck::Enforce(DEFAULT_EDGE_TOL)
    }
}

/// Ratio of the largest boundary magnitude to the largest magnitude overall.
pub fn edge_ratio<F: Fn(usize) -> f64>(grid: &UniformGrid, mag: F) -> f64 {
    let max = (0..grid.len()).map(&mag).fold(0.0, f64::max);
    if max == 0.0 {
        return 0.0;
    }
    let edge = grid
        .boundary_indices()
        .into_iter()
        .map(&mag)
        .fold(0.0, f64::max);
    edge / max
}

pub fn check_edges<F: Fn(usize) -> f64>(grid: &UniformGrid, mag: F, check: EdgeCheck) -> Result<()> {
    if let EdgeCheck::Enforce(tol) = check {
        let ratio = edge_ratio(grid, mag);
        if ratio > tol {
            return Err(TslError::EdgeMass { ratio, tol });
        }
    }
    Ok(())
}

thread_local! {
    static PLANS: RefCell<(FftPlanner<f64>, HashMap<(usize, bool), Arc<dyn Fft<f64>>>)> =
        RefCell::new((FftPlanner::new(), HashMap::new()));
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANS.with(|p| {
        let mut p = p.borrow_mut();
        if let Some(f) = p.1.get(&(n, inverse)) {
            return f.clone();
        }
        let f = if inverse {
            p.0.plan_fft_inverse(n)
        } else {
            p.0.plan_fft_forward(n)
        };
        p.1.insert((n, inverse), f.clone());
        f
    })
}

/// Unnormalized in-place DFT along one axis of a row-major array.
fn dft_axis(data: &mut [Complex64], shape: &[usize], axis: usize, inverse: bool) {
    let fft = plan(shape[axis], inverse);
    if shape.len() == 1 {
        fft.process(data);
        return;
    }
    let (n0, n1) = (shape[0], shape[1]);
    if axis == 1 {
        for row in data.chunks_mut(n1) {
            fft.process(row);
        }
    } else {
        let mut col = vec![Complex64::new(0.0, 0.0); n0];
        for j in 0..n1 {
            for i in 0..n0 {
                col[i] = data[i * n1 + j];
            }
            fft.process(&mut col);
            for i in 0..n0 {
                data[i * n1 + j] = col[i];
            }
        }
    }
}

fn axis_factor(grid: &UniformGrid, idx: usize, f: impl Fn(&Axis, usize) -> Complex64) -> Complex64 {
    match grid.dim() {
        1 => f(&grid.axes[0], idx),
        _ => {
            let n1 = grid.axes[1].count;
            f(&grid.axes[0], idx / n1) * f(&grid.axes[1], idx % n1)
        }
    }
}

fn alternating(j: usize) -> f64 {
    if j % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Samples of the continuous Fourier transform on the centered spectral grid.
pub fn forward_spectrum(values: &[Complex64], grid: &UniformGrid, check: EdgeCheck) -> Result<Vec<Complex64>> {
    if values.len() != grid.len() {
        return Err(TslError::InvalidParameter(format!(
            "{} values for a grid of {} points",
            values.len(),
            grid.len()
        )));
    }
    check_edges(grid, |i| values[i].norm(), check)?;
    let mut data: Vec<Complex64> = values
        .iter()
        .enumerate()
        .map(|(i, v)| v * axis_factor(grid, i, |_, j| Complex64::new(alternating(j), 0.0)))
        .collect();
    let shape = grid.shape();
    for ax in 0..grid.dim() {
        dft_axis(&mut data, &shape, ax, false);
    }
    for (k, d) in data.iter_mut().enumerate() {
        *d *= axis_factor(grid, k, |a, kk| {
            Complex64::from_polar(a.spacing, -a.u(kk) * a.origin)
        });
    }
    Ok(data)
}

pub fn forward_spectrum_real(values: &[f64], grid: &UniformGrid, check: EdgeCheck) -> Result<Vec<Complex64>> {
    let c: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    forward_spectrum(&c, grid, check)
}

/// Exact inverse of [`forward_spectrum`].
pub fn inverse_spectrum(spectrum: &[Complex64], grid: &UniformGrid) -> Vec<Complex64> {
    assert_eq!(spectrum.len(), grid.len(), "spectrum length does not match grid");
    let mut data: Vec<Complex64> = spectrum
        .iter()
        .enumerate()
        .map(|(k, v)| v * axis_factor(grid, k, |a, kk| Complex64::from_polar(1.0, a.u(kk) * a.origin)))
        .collect();
    let shape = grid.shape();
    for ax in 0..grid.dim() {
        dft_axis(&mut data, &shape, ax, true);
    }
    for (j, d) in data.iter_mut().enumerate() {
        *d *= axis_factor(grid, j, |a, jj| {
            Complex64::new(alternating(jj) / (a.count as f64 * a.spacing), 0.0)
        });
    }
    data
}

pub fn trapezoid_weights(axis: &Axis) -> Vec<f64> {
    let mut w = vec![axis.spacing; axis.count];
    w[0] *= 0.5;
    w[axis.count - 1] *= 0.5;
    w
}

fn quad_weight(grid: &UniformGrid, idx: usize) -> f64 {
    let w = |a: &Axis, j: usize| {
        if j == 0 || j == a.count - 1 {
            0.5 * a.spacing
        } else {
            a.spacing
        }
    };
    match grid.dim() {
        1 => w(&grid.axes[0], idx),
        _ => {
            let n1 = grid.axes[1].count;
            w(&grid.axes[0], idx / n1) * w(&grid.axes[1], idx % n1)
        }
    }
}

/// Trapezoid-rule integral over the grid.
pub fn quadrature(values: &[f64], grid: &UniformGrid, check: EdgeCheck) -> Result<f64> {
    if values.len() != grid.len() {
        return Err(TslError::InvalidParameter("value count does not match grid".into()));
    }
    check_edges(grid, |i| values[i].abs(), check)?;
    Ok(values.iter().enumerate().map(|(i, v)| v * quad_weight(grid, i)).sum())
}

pub fn quadrature_complex(values: &[Complex64], grid: &UniformGrid, check: EdgeCheck) -> Result<Complex64> {
    if values.len() != grid.len() {
        return Err(TslError::InvalidParameter("value count does not match grid".into()));
    }
    check_edges(grid, |i| values[i].norm(), check)?;
    Ok(values.iter().enumerate().map(|(i, v)| v * quad_weight(grid, i)).sum())
}

/// Multilinear interpolation of spectral samples at frequency `u`.
/// Frequencies outside the sampled box give zero.
pub fn interpolate_spectrum(spectrum: &[Complex64], grid: &UniformGrid, u: &[f64]) -> Complex64 {
    let pos: Vec<(usize, f64)> = grid
        .axes
        .iter()
        .zip(u)
        .map(|(a, &ui)| {
            let p = ui / a.du() + (a.count / 2) as f64;
            if p < 0.0 || p > (a.count - 1) as f64 {
                (usize::MAX, 0.0)
            } else {
                let i = (p.floor() as usize).min(a.count - 2);
                (i, p - i as f64)
            }
        })
        .collect();
    if pos.iter().any(|(i, _)| *i == usize::MAX) {
        return Complex64::new(0.0, 0.0);
    }
    match grid.dim() {
        1 => {
            let (i, t) = pos[0];
            spectrum[i] * (1.0 - t) + spectrum[i + 1] * t
        }
        _ => {
            let n1 = grid.axes[1].count;
            let ((i, s), (j, t)) = (pos[0], pos[1]);
            let v = |a: usize, b: usize| spectrum[a * n1 + b];
            v(i, j) * (1.0 - s) * (1.0 - t)
                + v(i + 1, j) * s * (1.0 - t)
                + v(i, j + 1) * (1.0 - s) * t
                + v(i + 1, j + 1) * s * t
        }
    }
}

/// Profile `r ↦ |φ̂(rω)|` on `count` equispaced radii in `[0, r_max]`.
pub fn ray_samples(
    spectrum: &[Complex64],
    grid: &UniformGrid,
    direction: &[f64],
    r_max: f64,
    count: usize,
) -> Result<Vec<(f64, f64)>> {
    if direction.len() != grid.dim() {
        return Err(TslError::Range("direction dimension mismatch".into()));
    }
    let norm = direction.iter().map(|d| d * d).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(TslError::Range(format!("direction must have unit norm, got {norm}")));
    }
    let limit = grid
        .axes
        .iter()
        .zip(direction)
        .filter(|(_, d)| d.abs() > 1e-15)
        .map(|(a, d)| (a.nyquist() - a.du()) / d.abs())
        .fold(f64::INFINITY, f64::min);
    if !(r_max >= 0.0 && r_max <= limit + 1e-12) {
        return Err(TslError::Range(format!("r_max {r_max} outside spectral extent {limit}")));
    }
    if count < 2 {
        return Err(TslError::Range("need at least two radii".into()));
    }
    Ok((0..count)
        .map(|i| {
            let r = r_max * i as f64 / (count - 1) as f64;
            let u: Vec<f64> = direction.iter().map(|d| r * d).collect();
            (r, interpolate_spectrum(spectrum, grid, &u).norm())
        })
        .collect())
}

/// Geometrically spaced scales with trapezoid weights for the measure `dy/y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleLadder {
    pub y_min: f64,
    pub y_max: f64,
    samples: Vec<f64>,
    weights: Vec<f64>,
}

impl ScaleLadder {
    pub fn new(y_min: f64, y_max: f64, count: usize) -> Result<Self> {
        if !(y_min > 0.0 && y_min < y_max && y_max.is_finite()) {
            return Err(TslError::InvalidParameter(format!(
                "ladder needs 0 < y_min < y_max, got [{y_min}, {y_max}]"
            )));
        }
        if count < 2 {
            return Err(TslError::InvalidParameter("ladder needs at least two scales".into()));
        }
        let span = (y_max / y_min).ln();
        let h = span / (count - 1) as f64;
        let samples: Vec<f64> = (0..count)
            .map(|j| {
                if j == count - 1 {
                    y_max
                } else {
                    y_min * (h * j as f64).exp()
                }
            })
            .collect();
        let mut weights = vec![h; count];
        weights[0] = 0.5 * h;
        weights[count - 1] = 0.5 * h;
        Ok(ScaleLadder { y_min, y_max, samples, weights })
    }

    /// Ladder with `per_octave` scales per doubling, rounded to fit `[y_min, y_max]`.
    pub fn per_octave(y_min: f64, y_max: f64, per_octave: usize) -> Result<Self> {
        let octaves = (y_max / y_min).log2();
        let count = ((octaves * per_octave as f64).round() as usize).max(1) + 1;
        ScaleLadder::new(y_min, y_max, count)
    }

    /// Ladder with nodes exactly at `2^{j / per_octave}` for `j` in `[lo·p, hi·p]`.
    pub fn dyadic(lo_exp: i32, hi_exp: i32, per_octave: usize) -> Result<Self> {
        let p = per_octave as i32;
        let count = ((hi_exp - lo_exp) * p + 1) as usize;
        let mut l = ScaleLadder::new(2f64.powi(lo_exp), 2f64.powi(hi_exp), count)?;
        l.samples = (0..count as i32)
            .map(|j| 2f64.powf(lo_exp as f64 + j as f64 / p as f64))
            .collect();
        Ok(l)
    }

    /// Ladder consisting of explicit scales with unit weights (used for single-scale evaluations).
    pub fn explicit(samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() || samples.iter().any(|y| !(*y > 0.0 && y.is_finite())) {
            return Err(TslError::InvalidParameter("explicit scales must be positive".into()));
        }
        let y_min = samples.iter().cloned().fold(f64::INFINITY, f64::min);
        let y_max = samples.iter().cloned().fold(0.0, f64::max);
        let weights = vec![1.0; samples.len()];
        Ok(ScaleLadder { y_min, y_max, samples, weights })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn log_step(&self) -> f64 {
        if self.len() < 2 {
            0.0
        } else {
            (self.samples[1] / self.samples[0]).ln()
        }
    }

    pub fn log_measure(&self) -> f64 {
        (self.y_max / self.y_min).ln()
    }

    /// Same range with twice the density (every old node is kept).
    pub fn refined(&self) -> Result<Self> {
        ScaleLadder::new(self.y_min, self.y_max, 2 * (self.len() - 1) + 1)
    }

    /// Every other node; requires an odd count.
    pub fn decimated(&self) -> Result<Self> {
        if self.len() % 2 == 0 || self.len() < 3 {
            return Err(TslError::InvalidParameter("decimation needs an odd count >= 3".into()));
        }
        let mut l = ScaleLadder::new(self.y_min, self.y_max, (self.len() - 1) / 2 + 1)?;
        l.samples = self.samples.iter().step_by(2).cloned().collect();
        Ok(l)
    }
}

/// Sums of `values[j]` grouped into dyadic blocks `[2^b, 2^{b+1})` of `positions[j]`.
/// Returns `(b, sum, count)` sorted by `b`.
pub fn dyadic_blocks(positions: &[f64], values: &[f64]) -> Vec<(i32, f64, usize)> {
    let mut map: std::collections::BTreeMap<i32, (f64, usize)> = Default::default();
    for (p, v) in positions.iter().zip(values) {
        if *p <= 0.0 {
            continue;
        }
        let b = (p.log2() + 1e-12).floor() as i32;
        let e = map.entry(b).or_insert((0.0, 0));
        e.0 += v;
        e.1 += 1;
    }
    map.into_iter().map(|(b, (s, c))| (b, s, c)).collect()
}
