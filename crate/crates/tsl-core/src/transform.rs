//! The regularizing transform `M_φ^f(x, y) = (f ∗ φ_y)(x)` over a scale ladder.

use crate::error::{Result, TslError};
use crate::grid::{forward_spectrum, inverse_spectrum, EdgeCheck, ScaleLadder, UniformGrid};
use crate::kernels::{moments, Kernel};
use crate::numerics::{binomial, lagrange_equispaced, linear_fit};
use crate::signals::{ComponentNorm, Signal};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone, PartialEq)]
pub struct ScaleField {
    pub grid: UniformGrid,
    pub ladder: ScaleLadder,
    pub m: usize,
    /// Flat `[scale][component][point]`.
    pub values: Vec<Complex64>,
    pub provenance: (String, String),
}

impl ScaleField {
    pub fn points(&self) -> usize {
        self.grid.len()
    }

    pub fn slice(&self, s: usize, c: usize) -> &[Complex64] {
        let n = self.points();
        let start = (s * self.m + c) * n;
        &self.values[start..start + n]
    }

    pub fn value(&self, s: usize, c: usize, i: usize) -> Complex64 {
        self.values[(s * self.m + c) * self.points() + i]
    }

    /// Component norm of `M(x_i, y_s)`.
    pub fn norm_at(&self, s: usize, i: usize, cn: ComponentNorm) -> f64 {
        let v: Vec<Complex64> = (0..self.m).map(|c| self.value(s, c, i)).collect();
        cn.apply(&v)
    }

    /// `‖M(·, y_s)‖` pointwise.
    pub fn norms(&self, s: usize, cn: ComponentNorm) -> Vec<f64> {
        (0..self.points()).map(|i| self.norm_at(s, i, cn)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    pub fn linear_combination(&self, a: Complex64, other: &ScaleField, b: Complex64) -> Result<ScaleField> {
        if self.values.len() != other.values.len() || !self.grid.approx_eq(&other.grid) {
            return Err(TslError::InvalidParameter("fields have different shapes".into()));
        }
        let mut out = self.clone();
        out.values = self.values.iter().zip(&other.values).map(|(x, y)| x * a + y * b).collect();
        Ok(out)
    }

    /// TBRG1 payload (per point: scales × components × (re, im)) plus JSON sidecar.
    pub fn save(&self, stem: &std::path::Path) -> Result<()> {
        let (n, s, m) = (self.points(), self.ladder.len(), self.m);
        let mut vals = Vec::with_capacity(n * s * m * 2);
        for i in 0..n {
            for si in 0..s {
                for c in 0..m {
                    let v = self.value(si, c, i);
                    vals.push(v.re);
                    vals.push(v.im);
                }
            }
        }
        crate::io::save_tbrg1(&stem.with_extension("tbrg"), &self.grid, s * m * 2, &vals)?;
        let side = serde_json::json!({
            "ladder": self.ladder.samples(),
            "components": m,
            "layout": "per point: scale-major, then component, then (re, im)",
            "signal": self.provenance.0,
            "kernel": self.provenance.1,
        });
        std::fs::write(stem.with_extension("json"), serde_json::to_string_pretty(&side).unwrap())?;
        Ok(())
    }

    /// Rows `x, y, |M|, re/im per component` for plotting.
    pub fn csv_rows(&self) -> (Vec<String>, Vec<Vec<f64>>) {
        let mut header = vec!["x".to_string(), "y".to_string(), "norm".to_string()];
        for c in 0..self.m {
            header.push(format!("re{c}"));
            header.push(format!("im{c}"));
        }
        let mut rows = Vec::new();
        for (s, &y) in self.ladder.samples().iter().enumerate() {
            for i in 0..self.points() {
                let mut r = vec![self.grid.point(i)[0], y, self.norm_at(s, i, ComponentNorm::L2)];
                for c in 0..self.m {
                    let v = self.value(s, c, i);
                    r.push(v.re);
                    r.push(v.im);
                }
                rows.push(r);
            }
        }
        (header, rows)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SmoothMethod {
    /// `f̂(u) φ̂(yu)` on the smooth part's grid.
    #[default]
    Spectral,
    /// Real-space sum over the nonzero samples with pointwise kernel values;
    /// keeps tiny tails free of transform round-off.
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RegularizeOptions {
    pub smooth: SmoothMethod,
}

/// Smallest scale resolved on a grid of spacing `dx`.
pub fn min_resolved_scale(dx: f64) -> f64 {
    2.0 * dx / PI
}

pub fn regularize(f: &Signal, phi: &Kernel, grid: &UniformGrid, ladder: &ScaleLadder) -> Result<ScaleField> {
    regularize_with(f, phi, grid, ladder, RegularizeOptions::default())
}

pub fn regularize_with(
    f: &Signal,
    phi: &Kernel,
    grid: &UniformGrid,
    ladder: &ScaleLadder,
    opts: RegularizeOptions,
) -> Result<ScaleField> {
    if grid.dim() != 1 || phi.dim() != 1 {
        return Err(TslError::InvalidParameter("the transform is one-dimensional".into()));
    }
    f.validate()?;
    let mut dx = grid.axis(0).spacing;
    if let Some(s) = &f.smooth {
        dx = dx.max(s.grid.axis(0).spacing);
    }
    // wave and polynomial terms are exact at every scale
    let limit = min_resolved_scale(dx);
    let sampled = f.smooth.is_some() || !f.diracs.is_empty();
    if sampled && ladder.y_min < limit * (1.0 - 1e-12) {
        return Err(TslError::ScaleResolution { y_min: ladder.y_min, limit });
    }
    let mom = match f.poly_degree() {
        Some(d) => moments(phi, d)?.into_iter().map(|m| m.value()).collect(),
        None => vec![],
    };
    // zero padding wide enough that the largest dilated kernel does not wrap around
    let smooth_hat: Option<(UniformGrid, Vec<Vec<Complex64>>)> = match (&f.smooth, opts.smooth) {
        (Some(s), SmoothMethod::Spectral) => {
            let sa = *s.grid.axis(0);
            let pad = ((ladder.y_max * kernel_radius(phi) / sa.spacing).ceil() as usize + 8).min(8 * sa.count);
            let total = (sa.count + 2 * pad).next_power_of_two();
            let padded = UniformGrid::line(sa.origin - pad as f64 * sa.spacing, sa.spacing, total)?;
            let hats = s
                .values
                .iter()
                .map(|v| {
                    let mut w = vec![ZERO; pad];
                    w.extend_from_slice(v);
                    w.resize(total, ZERO);
                    forward_spectrum(&w, &padded, EdgeCheck::Waive)
                })
                .collect::<Result<_>>()?;
            Some((padded, hats))
        }
        _ => None,
    };
    let xs = grid.axis(0).points();
    let n = xs.len();
    let m = f.m;
    let slices: Vec<Vec<Complex64>> = ladder
        .samples()
        .par_iter()
        .map(|&y| {
            let mut out = vec![ZERO; m * n];
            if let Some(s) = &f.smooth {
                let sa = *s.grid.axis(0);
                match &smooth_hat {
                    Some((pg, hat)) => {
                        let pa = *pg.axis(0);
                        let mult: Vec<Complex64> = (0..pa.count).map(|k| phi.spectrum_at1(y * pa.u(k))).collect();
                        for c in 0..m {
                            let prod: Vec<Complex64> = hat[c].iter().zip(&mult).map(|(a, b)| a * b).collect();
                            let conv = inverse_spectrum(&prod, pg);
                            for (i, &x) in xs.iter().enumerate() {
                                if x >= pa.origin && x <= pa.last() {
                                    out[c * n + i] += lagrange_equispaced(&conv, pa.origin, pa.spacing, x, 8);
                                }
                            }
                        }
                    }
                    None => {
                        let w = crate::grid::trapezoid_weights(&sa);
                        let nz: Vec<usize> =
                            (0..sa.count).filter(|&j| s.values.iter().any(|v| v[j] != ZERO)).collect();
                        for (i, &x) in xs.iter().enumerate() {
                            let kv: Vec<Complex64> =
                                nz.iter().map(|&j| phi.value_at((x - sa.x(j)) / y) / y * w[j]).collect();
                            for c in 0..m {
                                out[c * n + i] += nz.iter().zip(&kv).map(|(&j, k)| s.values[c][j] * k).sum::<Complex64>();
                            }
                        }
                    }
                }
            }
            for d in &f.diracs {
                let scale = y.powi(-1 - d.order as i32);
                for (i, &x) in xs.iter().enumerate() {
                    let v = phi.deriv_at(d.order, (x - d.location) / y) * scale;
                    for c in 0..m {
                        out[c * n + i] += v * d.weight[c];
                    }
                }
            }
            for wv in &f.waves {
                let h = phi.spectrum_at1(y * wv.frequency);
                for (i, &x) in xs.iter().enumerate() {
                    let e = Complex64::from_polar(1.0, wv.frequency * x) * h;
                    for c in 0..m {
                        out[c * n + i] += wv.amplitude[c] * e;
                    }
                }
            }
            if !mom.is_empty() {
                // ∫ (x − y t)^d φ(t) dt = Σ_k C(d,k) x^{d−k} (−y)^k μ_k
                for (dd, coeffs) in f.poly.iter().enumerate().take(mom.len()) {
                    let terms: Vec<Complex64> =
                        (0..=dd).map(|k| mom[k] * binomial(dd, k) * (-y).powi(k as i32)).collect();
                    for (i, &x) in xs.iter().enumerate() {
                        let v: Complex64 = terms.iter().enumerate().map(|(k, t)| t * x.powi((dd - k) as i32)).sum();
                        for c in 0..m {
                            out[c * n + i] += coeffs[c] * v;
                        }
                    }
                }
            }
            out
        })
        .collect();
    Ok(ScaleField {
        grid: grid.clone(),
        ladder: ladder.clone(),
        m,
        values: slices.into_iter().flatten().collect(),
        provenance: (String::from("signal"), phi.name().to_string()),
    })
}

/// Half-width of the region where the kernel exceeds `1e-16` of its peak.
pub(crate) fn kernel_radius(phi: &Kernel) -> f64 {
    let sp = phi.spatial();
    let peak = sp.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let ax = phi.grid().axis(0);
    (0..sp.len())
        .filter(|&j| sp[j].norm() > 1e-16 * peak)
        .map(|j| ax.x(j).abs())
        .fold(0.0, f64::max)
}

/// `W_ψ f(x, y) = ⟨f(x + y t), conj ψ(t)⟩`, the transform with the reflected conjugate kernel.
pub fn wavelet_transform(f: &Signal, psi: &Kernel, grid: &UniformGrid, ladder: &ScaleLadder) -> Result<ScaleField> {
    let k = psi.reflected_conjugate()?;
    regularize(f, &k, grid, ladder)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthFit {
    pub k: u32,
    pub l: u32,
    pub c: f64,
    /// False when no exponent pair up to the search bound covers the field.
    pub covered: bool,
}

pub const GROWTH_SEARCH_MAX: u32 = 12;
/// Largest log-log slope towards an edge still read as "not growing"; half an integer step.
const TREND_SLACK: f64 = 0.5;

fn log_slope(pts: impl Iterator<Item = (f64, f64)>) -> Option<f64> {
    let (lx, ly): (Vec<f64>, Vec<f64>) = pts.filter(|&(_, v)| v > 0.0).map(|(t, v)| (t.ln(), v.ln())).unzip();
    linear_fit(&lx, &ly).map(|(s, _)| s)
}

/// Smallest integer `(k, l)` with `‖M(x,y)‖ ≤ C (1/y + y)^k (1 + |x|)^l` on the field.
///
/// A pair is accepted when the normalized field shows no growth towards the edges of the
/// sampled region: over the first and last quarter of the ladder (normalized by `y^{-k}` and
/// `y^k` there), and over the outer quarter of `|x|`, the log-log slope of its running sup in `|x|`
/// towards the edge is at most one half.
/// `c` is the maximum of the normalized field.
pub fn slow_growth_fit(field: &ScaleField, cn: ComponentNorm) -> GrowthFit {
    let ys = field.ladder.samples();
    let xs = field.grid.axis(0).points();
    let ns = ys.len();
    let q = (ns / 4).max(3).min(ns);
    let norms: Vec<Vec<f64>> = (0..ns).map(|s| field.norms(s, cn)).collect();
    let xcut = crate::numerics::quantile(&xs.iter().map(|x| x.abs()).collect::<Vec<_>>(), 0.75);
    let outer: Vec<usize> = (0..xs.len()).filter(|&i| xs[i].abs() >= xcut).collect();
    let mut by_abs: Vec<usize> = (0..xs.len()).collect();
    by_abs.sort_by(|&a, &b| xs[a].abs().total_cmp(&xs[b].abs()));
    let mut order: Vec<(u32, u32)> = (0..=GROWTH_SEARCH_MAX)
        .flat_map(|k| (0..=GROWTH_SEARCH_MAX).map(move |l| (k, l)))
        .collect();
    order.sort_by_key(|&(k, l)| (k + l, k));
    let mut last_c = f64::INFINITY;
    for (k, l) in order {
        let r = |s: usize, i: usize| {
            norms[s][i] / ((1.0 / ys[s] + ys[s]).powi(k as i32) * (1.0 + xs[i].abs()).powi(l as i32))
        };
        let rows: Vec<f64> = (0..ns).map(|s| (0..xs.len()).map(|i| r(s, i)).fold(0.0, f64::max)).collect();
        let c = rows.iter().copied().fold(0.0, f64::max);
        if c == 0.0 {
            return GrowthFit { k, l, c, covered: true };
        }
        // each end is tested against its dominant factor, y^{-k} near 0 and y^k near ∞
        let end = |s: usize, sign: i32| rows[s] * ((1.0 / ys[s] + ys[s]) * ys[s].powi(sign)).powi(k as i32);
        let small = log_slope((0..q).map(|s| (ys[s], end(s, 1)))).unwrap_or(0.0);
        let large = log_slope((ns - q..ns).map(|s| (ys[s], end(s, -1)))).unwrap_or(0.0);
        // envelope sup over |x'| <= |x|, so bounded oscillation reads as flat
        let col: Vec<f64> = (0..xs.len()).map(|i| (0..ns).map(|s| r(s, i)).fold(0.0, f64::max)).collect();
        let mut env = vec![0.0; xs.len()];
        let mut run = 0.0f64;
        for &i in &by_abs {
            run = run.max(col[i]);
            env[i] = run;
        }
        let wide = log_slope(outer.iter().map(|&i| (1.0 + xs[i].abs(), env[i]))).unwrap_or(0.0);
        if small >= -TREND_SLACK && large <= TREND_SLACK && wide <= TREND_SLACK {
            return GrowthFit { k, l, c, covered: true };
        }
        last_c = c;
    }
    GrowthFit { k: GROWTH_SEARCH_MAX, l: GROWTH_SEARCH_MAX, c: last_c, covered: false }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalizationFit {
    /// Fitted exponent `s` of `sup_K ‖M(·, y)‖ ≈ C y^s`; infinite when the field vanishes on `K`.
    pub slope: f64,
    pub vanishes: bool,
}

/// Decay of the field on a window `K = [a, b]` away from the support of `f`.
pub fn localization_decay(
    field: &ScaleField,
    f: &Signal,
    window: (f64, f64),
    y_max: f64,
    cn: ComponentNorm,
) -> Result<LocalizationFit> {
    let (a, b) = window;
    match f.support() {
        None => return Err(TslError::SupportOverlap("f has unbounded support".into())),
        Some(Some((lo, hi))) if !(b < lo || a > hi) => {
            return Err(TslError::SupportOverlap(format!("[{a}, {b}] meets [{lo}, {hi}]")))
        }
        _ => {}
    }
    let xs = field.grid.axis(0).points();
    let idx: Vec<usize> = (0..xs.len()).filter(|&i| xs[i] >= a && xs[i] <= b).collect();
    if idx.is_empty() {
        return Err(TslError::Range("window contains no grid points".into()));
    }
    let scales: Vec<usize> = (0..field.ladder.len()).filter(|&s| field.ladder.samples()[s] <= y_max).collect();
    let lower = &scales[..scales.len().div_ceil(2).max(2).min(scales.len())];
    let (mut lx, mut ly) = (vec![], vec![]);
    for &s in lower {
        let sup = idx.iter().map(|&i| field.norm_at(s, i, cn)).fold(0.0, f64::max);
        if sup > 0.0 {
            lx.push(field.ladder.samples()[s].ln());
            ly.push(sup.ln());
        }
    }
    if lx.is_empty() {
        return Ok(LocalizationFit { slope: f64::INFINITY, vanishes: true });
    }
    let slope = linear_fit(&lx, &ly).map(|(s, _)| s).unwrap_or(f64::INFINITY);
    Ok(LocalizationFit { slope, vanishes: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{compact_bump, gaussian_heat, mexican_hat, s0_bump};
    use crate::signals::pair;
    use crate::testutil::integrate_line;
    use proptest::prelude::*;

    fn line() -> UniformGrid {
        UniformGrid::centered_line(8.0, 256).unwrap()
    }

    fn ladder() -> ScaleLadder {
        ScaleLadder::new(0.1, 4.0, 12).unwrap()
    }

    #[test]
    fn dirac_field() {
        let g = gaussian_heat(1).unwrap();
        let f = regularize(&Signal::dirac(0.0, 0), &g, &line(), &ladder()).unwrap();
        for (s, &y) in ladder().samples().iter().enumerate() {
            for i in (0..256).step_by(17) {
                let x = line().point(i)[0];
                assert!((f.value(s, 0, i) - g.value_at(x / y) / y).norm() < 1e-14);
            }
        }
        let f = regularize(&Signal::dirac(0.0, 1), &g, &line(), &ladder()).unwrap();
        let (s, y) = (3, ladder().samples()[3]);
        let x = line().point(140)[0];
        assert!((f.value(s, 0, 140) - g.deriv_at(1, x / y) / (y * y)).norm() < 1e-14);
    }

    #[test]
    fn cosine_field_matches_quadrature() {
        let g = gaussian_heat(1).unwrap();
        let f = regularize(&Signal::cosine(1.0, 1.0), &g, &line(), &ladder()).unwrap();
        for (s, i) in [(0, 10), (2, 50), (5, 128), (7, 200), (9, 33), (11, 255), (4, 77), (6, 140)] {
            let (x, y) = (line().point(i)[0], ladder().samples()[s]);
            let oracle = integrate_line(&|t| (x - y * t).cos() * g.value_at(t).re, 40.0, 1e-13);
            assert!((f.value(s, 0, i).re - oracle).abs() < 1e-9);
            assert!((f.value(s, 0, i).re - (-y * y).exp() * x.cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn wavelet_examples() {
        let h = mexican_hat(1).unwrap();
        let w = wavelet_transform(&Signal::dirac(0.0, 0), &h, &line(), &ladder()).unwrap();
        let (s, y) = (4, ladder().samples()[4]);
        let x = line().point(100)[0];
        assert!((w.value(s, 0, 100) - h.value_at(x / y) / y).norm() < 1e-14);
        let b = s0_bump(2.0, 2.0, 1).unwrap();
        let one = wavelet_transform(&Signal::polynomial(&[1.0]), &b, &line(), &ladder()).unwrap();
        assert!(one.values.iter().all(|v| v.norm() < 1e-6));
        let c = wavelet_transform(&Signal::cosine(1.0, 1.0), &h, &line(), &ladder()).unwrap();
        for (s, i) in [(1, 20), (6, 130), (10, 240)] {
            let (x, y) = (line().point(i)[0], ladder().samples()[s]);
            let exact = (2.0 * PI).sqrt() * y * y * (-y * y / 2.0).exp() * x.cos();
            let oracle = integrate_line(&|t| (x + y * t).cos() * h.value_at(t).re, 40.0, 1e-13);
            assert!((c.value(s, 0, i).re - exact).abs() < 1e-10 && (oracle - exact).abs() < 1e-9);
        }
    }

    #[test]
    fn resolution_error() {
        let g = gaussian_heat(1).unwrap();
        let lad = ScaleLadder::new(0.01, 1.0, 8).unwrap();
        assert!(matches!(
            regularize(&Signal::dirac(0.0, 0), &g, &line(), &lad),
            Err(TslError::ScaleResolution { .. })
        ));
    }

    #[test]
    fn growth_examples() {
        let g = gaussian_heat(1).unwrap();
        let grid = UniformGrid::centered_line(20.0, 1024).unwrap();
        let lad = ScaleLadder::new(0.2, 5.0, 24).unwrap();
        for m in 0..3 {
            let f = regularize(&Signal::dirac(0.0, m), &g, &grid, &lad).unwrap();
            let fit = slow_growth_fit(&f, ComponentNorm::L2);
            assert_eq!((fit.k, fit.l), (m as u32 + 1, 0), "order {m}");
            // φ^{(m)}(t) = (-1/2)^m H_m(t/2) e^{-t²/4} / (2√π)
            for (s, i) in [(0, 500), (7, 530), (15, 600), (23, 700)] {
                let (x, y) = (grid.point(i)[0], lad.samples()[s]);
                let t = x / y;
                let d = (-0.5f64).powi(m as i32) * crate::numerics::hermite_h(m, t / 2.0) * (-t * t / 4.0).exp()
                    / (2.0 * PI.sqrt());
                assert!((f.value(s, 0, i).re - d * y.powi(-1 - m as i32)).abs() < 1e-12 * (1.0 + d.abs() / y.powi(3)));
            }
        }
        let one = regularize(&Signal::polynomial(&[1.0]), &g, &grid, &lad).unwrap();
        let fit = slow_growth_fit(&one, ComponentNorm::L2);
        assert_eq!((fit.k, fit.l), (0, 0));
        let x = regularize(&Signal::polynomial(&[0.0, 1.0]), &g, &grid, &lad).unwrap();
        assert!((x.value(5, 0, 100).re - grid.point(100)[0]).abs() < 1e-10);
        let fit = slow_growth_fit(&x, ComponentNorm::L2);
        assert_eq!((fit.k, fit.l), (0, 1));
    }

    #[test]
    fn localization_examples() {
        let grid = UniformGrid::centered_line(4.0, 1024).unwrap();
        let lad = ScaleLadder::new(0.01, 0.1, 16).unwrap();
        let g = gaussian_heat(1).unwrap();
        let d = Signal::dirac(0.0, 0);
        let f = regularize(&d, &g, &grid, &lad).unwrap();
        let fit = localization_decay(&f, &d, (2.0, 3.0), 0.1, ComponentNorm::L2).unwrap();
        assert!(fit.slope >= 4.0, "{fit:?}");
        let direct = (-1.0 / (0.1f64 * 0.1)).exp() / 0.1 / (2.0 * PI.sqrt());
        assert!((f.norm_at(15, 768, ComponentNorm::L2) - direct).abs() < 1e-12 * direct.max(1e-300) + 1e-300);

        let cb = compact_bump().unwrap();
        let lad1 = ScaleLadder::new(0.05, 0.9, 10).unwrap();
        let f = regularize(&d, &cb, &grid, &lad1).unwrap();
        let fit = localization_decay(&f, &d, (2.0, 3.0), 0.9, ComponentNorm::L2).unwrap();
        assert!(fit.vanishes);

        let big = UniformGrid::centered_line(16.0, 2048).unwrap();
        let vals: Vec<f64> = big
            .axis(0)
            .points()
            .iter()
            .map(|&x| if x.abs() < 1.0 { (-1.0 / (1.0 - x * x)).exp() } else { 0.0 })
            .collect();
        let bump = Signal::smooth(big.clone(), &vals, EdgeCheck::default()).unwrap();
        let lad2 = ScaleLadder::new(0.05, 1.0, 16).unwrap();
        let opts = RegularizeOptions { smooth: SmoothMethod::Direct };
        let f = regularize_with(&bump, &g, &big, &lad2, opts).unwrap();
        let fit = localization_decay(&f, &bump, (5.0, 6.0), 1.0, ComponentNorm::L2).unwrap();
        assert!(fit.slope >= 4.0, "{fit:?}");
        assert!(matches!(
            localization_decay(&f, &bump, (0.5, 2.0), 1.0, ComponentNorm::L2),
            Err(TslError::SupportOverlap(_))
        ));
        assert!(localization_decay(&f, &Signal::cosine(1.0, 1.0), (5.0, 6.0), 1.0, ComponentNorm::L2).is_err());
    }

    #[test]
    fn spectral_and_direct_smooth_routes_agree() {
        let grid = UniformGrid::centered_line(16.0, 512).unwrap();
        let vals: Vec<f64> = grid.axis(0).points().iter().map(|x| (-x * x).exp()).collect();
        let f = Signal::smooth(grid.clone(), &vals, EdgeCheck::default()).unwrap();
        let g = gaussian_heat(1).unwrap();
        let lad = ScaleLadder::new(0.1, 2.0, 6).unwrap();
        let a = regularize(&f, &g, &grid, &lad).unwrap();
        let b = regularize_with(&f, &g, &grid, &lad, RegularizeOptions { smooth: SmoothMethod::Direct }).unwrap();
        for (j, (x, y)) in a.values.iter().zip(&b.values).enumerate() {
            assert!((x - y).norm() < 1e-10, "{j} {x} {y}");
        }
        // exact: e^{-x²} ∗ φ_y with φ̂(u) = e^{-u²} is a Gaussian of variance 1/2 + 2y²
        for (s, &y) in lad.samples().iter().enumerate() {
            let v = 0.5 + 2.0 * y * y;
            let x = grid.point(300)[0];
            let exact = PI.sqrt() * (-x * x / (2.0 * v)).exp() / (2.0 * PI * v).sqrt();
            assert!((a.value(s, 0, 300).re - exact).abs() < 1e-10);
        }
    }

    fn mixed_signal() -> Signal {
        Signal::dirac(0.3, 1).add(&Signal::wave(1.3, Complex64::new(0.4, -0.2))).unwrap()
    }

    #[test]
    fn scale_covariance() {
        let g = gaussian_heat(1).unwrap();
        let f = mixed_signal();
        let lad = ScaleLadder::new(0.2, 2.0, 6).unwrap();
        for a in [0.5, 2.0] {
            let grid = UniformGrid::centered_line(8.0, 256).unwrap();
            let ga = UniformGrid::line(grid.axis(0).origin * a, grid.axis(0).spacing * a, 256).unwrap();
            let la = ScaleLadder::explicit(lad.samples().iter().map(|y| y * a).collect()).unwrap();
            let m1 = regularize(&f, &g, &grid, &lad).unwrap();
            let m2 = regularize(&f.dilate(a).unwrap(), &g, &ga, &la).unwrap();
            for (x, y) in m1.values.iter().zip(&m2.values) {
                assert!((x - y).norm() < 1e-8 * (1.0 + x.norm()));
            }
        }
    }

    #[test]
    fn field_matches_pairing() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let g = mexican_hat(1).unwrap();
        let grid = UniformGrid::centered_line(16.0, 512).unwrap();
        let vals: Vec<f64> = grid.axis(0).points().iter().map(|x| (-(x - 1.0).powi(2)).exp()).collect();
        let rough = mixed_signal().add(&Signal::smooth(grid.clone(), &vals, EdgeCheck::default()).unwrap()).unwrap();
        let poly = [0.5, -1.0, 0.25];
        let f = rough.add(&Signal::polynomial(&poly)).unwrap();
        let lad = ScaleLadder::new(0.1, 2.0, 16).unwrap();
        let field = regularize(&f, &g, &grid, &lad).unwrap();
        for _ in 0..32 {
            let s = rng.gen_range(0..16);
            let i = rng.gen_range(64..448);
            let (x, y) = (grid.point(i)[0], lad.samples()[s]);
            // test function t ↦ y^{-1} φ((x − t)/y)
            let rho = g.dilated(y).unwrap().reflected_conjugate().unwrap().translated(&[x]).unwrap();
            let p = pair(&rough, &rho).unwrap()[0]
                + integrate_line(
                    &|t| {
                        let u = x - y * t;
                        (poly[0] + poly[1] * u + poly[2] * u * u) * g.value_at(t).re
                    },
                    30.0,
                    1e-13,
                );
            assert!((field.value(s, 0, i) - p).norm() < 1e-8 * (1.0 + p.norm()), "{s} {i}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn translation_covariance(h in -2.0f64..2.0) {
            let g = gaussian_heat(1).unwrap();
            let f = mixed_signal();
            let lad = ScaleLadder::new(0.2, 2.0, 5).unwrap();
            let grid = UniformGrid::centered_line(8.0, 256).unwrap();
            let shifted = UniformGrid::line(grid.axis(0).origin + h, grid.axis(0).spacing, 256).unwrap();
            let m1 = regularize(&f.translate(h).unwrap(), &g, &shifted, &lad).unwrap();
            let m2 = regularize(&f, &g, &grid, &lad).unwrap();
            for (x, y) in m1.values.iter().zip(&m2.values) {
                prop_assert!((x - y).norm() < 1e-8);
            }
        }

        #[test]
        fn linearity(a in -2.0f64..2.0, b in -2.0f64..2.0) {
            let g = gaussian_heat(1).unwrap();
            let h = mexican_hat(1).unwrap();
            let lad = ScaleLadder::new(0.2, 2.0, 4).unwrap();
            let grid = UniformGrid::centered_line(8.0, 128).unwrap();
            let f1 = mixed_signal();
            let f2 = Signal::polynomial(&[1.0, 2.0]).add(&Signal::dirac(-1.0, 0)).unwrap();
            let lhs = regularize(&f1.scaled(a).add(&f2.scaled(b)).unwrap(), &g, &grid, &lad).unwrap();
            let r1 = regularize(&f1, &g, &grid, &lad).unwrap();
            let r2 = regularize(&f2, &g, &grid, &lad).unwrap();
            let rhs = r1.linear_combination(Complex64::new(a, 0.0), &r2, Complex64::new(b, 0.0)).unwrap();
            for (x, y) in lhs.values.iter().zip(&rhs.values) {
                prop_assert!((x - y).norm() < 1e-10 * (1.0 + y.norm()));
            }
            let k = Kernel::combine(Complex64::new(a, 0.0), &g, Complex64::new(b, 0.0), &h).unwrap();
            let lhs = regularize(&f1, &k, &grid, &lad).unwrap();
            let s1 = regularize(&f1, &h, &grid, &lad).unwrap();
            let rhs = r1.linear_combination(Complex64::new(a, 0.0), &s1, Complex64::new(b, 0.0)).unwrap();
            for (x, y) in lhs.values.iter().zip(&rhs.values) {
                prop_assert!((x - y).norm() < 1e-10 * (1.0 + y.norm()));
            }
        }
    }
}
