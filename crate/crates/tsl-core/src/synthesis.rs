//! Calibration constants, reconstruction wavelets and the wavelet synthesis operator.

use crate::error::{Result, TslError};
use crate::grid::{forward_spectrum, inverse_spectrum, quadrature_complex, EdgeCheck, ScaleLadder, UniformGrid};
use crate::kernels::{is_nondegenerate, nondegeneracy_index, Kernel, SpectrumFn, DEFAULT_RAYS};
use crate::numerics::{lagrange_equispaced, smooth_transition};
use crate::signals::Signal;
use crate::transform::{regularize, wavelet_transform, ScaleField};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

pub const LOG_NODES: usize = 4096;
pub const LOG_R_MIN: f64 = 1e-6;
pub const LOG_R_MAX: f64 = 1e6;
pub const ZERO_CALIBRATION: f64 = 1e-13;
pub const UNDERFLOW: f64 = 1e-13;
pub const TRUNCATION_TOL: f64 = 1e-6;
pub const ADMISSIBILITY_TOL: f64 = 1e-8;
const DIRAC_STEP: f64 = 0.01;

/// `∫₀^∞ g(r) dr/r` by the trapezoid rule in `ln r` over `[1e-6, 1e6]`.
pub fn log_radial_integral(g: impl Fn(f64) -> Complex64) -> Complex64 {
    let (a, b) = (LOG_R_MIN.ln(), LOG_R_MAX.ln());
    let h = (b - a) / (LOG_NODES - 1) as f64;
    let mut acc = ZERO;
    for i in 0..LOG_NODES {
        let w = if i == 0 || i == LOG_NODES - 1 { 0.5 * h } else { h };
        acc += g((a + h * i as f64).exp()) * w;
    }
    acc
}

/// Unit directions used for ray integrals: `±1` on the line, `ray_count` angles in the plane.
pub fn directions(dim: usize, ray_count: usize) -> Result<Vec<Vec<f64>>> {
    match dim {
        1 => Ok(vec![vec![1.0], vec![-1.0]]),
        2 => Ok((0..ray_count.max(1))
            .map(|k| {
                let a = 2.0 * PI * k as f64 / ray_count.max(1) as f64;
                vec![a.cos(), a.sin()]
            })
            .collect()),
        _ => Err(TslError::InvalidParameter(format!("ray integrals in dimension {dim}"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub value: Complex64,
    pub per_direction: Vec<Complex64>,
    /// `max_ω |c(ω) − c| / |c|`.
    pub anisotropy: f64,
}

fn vanishes_at_origin(k: &Kernel) -> bool {
    let peak = k.spectral().iter().map(|v| v.norm()).fold(0.0, f64::max);
    k.spectrum_at(&vec![0.0; k.dim()]).norm() <= ADMISSIBILITY_TOL * peak.max(1e-300)
}

/// `c(ω) = ∫₀^∞ conj(ψ̂(rω)) η̂(rω) dr/r` for every direction, and their mean.
///
/// At least one of the two spectra must vanish at the origin, otherwise the ray integrals diverge.
pub fn calibration_constant(psi: &Kernel, eta: &Kernel, ray_count: usize, tol_aniso: f64) -> Result<Calibration> {
    if psi.dim() != eta.dim() {
        return Err(TslError::InvalidParameter("kernels of different dimension".into()));
    }
    if !vanishes_at_origin(psi) && !vanishes_at_origin(eta) {
        return Err(TslError::Precondition("neither spectrum vanishes at the origin".into()));
    }
    let (fp, fe) = (psi.spectrum_fn(), eta.spectrum_fn());
    let per_direction: Vec<Complex64> = directions(psi.dim(), ray_count)?
        .iter()
        .map(|w| {
            log_radial_integral(|r| {
                let u: Vec<f64> = w.iter().map(|x| x * r).collect();
                fp(&u).conj() * fe(&u)
            })
        })
        .collect();
    let value = per_direction.iter().sum::<Complex64>() / per_direction.len() as f64;
    if value.norm() < ZERO_CALIBRATION {
        return Err(TslError::ZeroCalibration(value.norm()));
    }
    let anisotropy = per_direction.iter().map(|c| (c - value).norm()).fold(0.0, f64::max) / value.norm();
    if anisotropy > tol_aniso {
        return Err(TslError::AnisotropicCalibration { deviation: anisotropy, tol: tol_aniso });
    }
    Ok(Calibration { value, per_direction, anisotropy })
}

/// Radial cutoff `κ`: zero outside `[inner, outer]`, equal to 1 on the middle part, with
/// smooth ramps of relative length `transition` at both ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Annulus {
    pub inner: f64,
    pub outer: f64,
    #[serde(default = "default_transition")]
    pub transition: f64,
}

fn default_transition() -> f64 {
    0.25
}

impl Annulus {
    pub fn new(inner: f64, outer: f64) -> Annulus {
        Annulus { inner, outer, transition: default_transition() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.inner > 0.0 && self.outer > self.inner && self.transition > 0.0 && self.transition <= 0.5) {
            return Err(TslError::InvalidParameter(format!("bad annulus {self:?}")));
        }
        Ok(())
    }

    pub fn plateau(&self) -> (f64, f64) {
        let w = self.transition * (self.outer - self.inner);
        (self.inner + w, self.outer - w)
    }

    pub fn value(&self, r: f64) -> f64 {
        let w = self.transition * (self.outer - self.inner);
        smooth_transition((r - self.inner) / w) * smooth_transition((self.outer - r) / w)
    }
}

/// Radius below which the annulus must not start for kernels with `τ = 0`.
pub fn tau_eff(phi: &Kernel) -> f64 {
    4.0 * phi.grid().axes().iter().map(|a| a.du()).fold(0.0, f64::max)
}

/// `η̂(u) = κ(|u|) conj(φ̂(u)) / ∫₀^∞ κ(r)|φ̂(rω)|² dr/r`, so that `c_{φ,η} = 1`.
///
/// The denominator depends only on the direction `ω = u/|u|`; in the plane it is tabulated on
/// `DEFAULT_RAYS` angles and interpolated linearly. The spatial samples of `η` are not checked
/// for edge mass: `η` is used through its spectrum.
pub fn reconstruction_wavelet(phi: &Kernel, kappa: &Annulus) -> Result<Kernel> {
    kappa.validate()?;
    if !is_nondegenerate(phi, DEFAULT_RAYS, crate::kernels::SUPPORT_TOL) {
        return Err(TslError::DegenerateKernel(phi.name().to_string()));
    }
    let f = phi.spectrum_fn();
    let k = *kappa;
    let denom = |w: &[f64]| {
        log_radial_integral(|r| {
            let u: Vec<f64> = w.iter().map(|x| x * r).collect();
            Complex64::new(k.value(r) * f(&u).norm_sqr(), 0.0)
        })
        .re
    };
    let dirs = directions(phi.dim(), DEFAULT_RAYS)?;
    let table: Vec<f64> = dirs.iter().map(|w| denom(w)).collect();
    if let Some(&v) = table.iter().min_by(|a, b| a.total_cmp(b)) {
        if v < UNDERFLOW {
            return Err(TslError::DivisionUnderflow { value: v, radius: 0.5 * (k.inner + k.outer) });
        }
    }
    let dim = phi.dim();
    let table = Arc::new(table);
    let spec: SpectrumFn = Arc::new(move |u: &[f64]| {
        let r = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        let kv = k.value(r);
        if kv == 0.0 {
            return ZERO;
        }
        let d = if dim == 1 {
            if u[0] > 0.0 {
                table[0]
            } else {
                table[1]
            }
        } else {
            let n = table.len() as f64;
            let a = u[1].atan2(u[0]).rem_euclid(2.0 * PI) / (2.0 * PI) * n;
            let i = a.floor() as usize % table.len();
            let t = a - a.floor();
            table[i] * (1.0 - t) + table[(i + 1) % table.len()] * t
        };
        f(u).conj() * (kv / d)
    });
    Kernel::from_spectrum("reconstruction-wavelet", phi.grid().clone(), spec, None, EdgeCheck::Waive)
}

/// Checks that `κ` equals 1 near the sphere of radius `max(τ, τ_eff)`.
pub fn annulus_covers_index(phi: &Kernel, kappa: &Annulus) -> Result<bool> {
    let tau = nondegeneracy_index(phi, crate::kernels::SUPPORT_TOL)?.value;
    let r = if tau > 0.0 { tau } else { tau_eff(phi) };
    let (a, b) = kappa.plateau();
    Ok(r > a && r < b)
}

fn slice_norm(terms: &[Vec<Complex64>], dx: f64) -> f64 {
    (terms.iter().flat_map(|t| t.iter()).map(|v| v.norm_sqr()).sum::<f64>() * dx).sqrt()
}

/// `Σ_j w_j (Φ(·, y_j) ∗ ψ_{y_j})(t)`, the ladder discretization of `∫₀^∞ Φ(·,y) ∗ ψ_y dy/y`.
///
/// Convolutions are circular on the field grid. The first and last per-scale terms must be
/// below `1e-6` of the largest one, otherwise the truncated scale integral is rejected.
pub fn synthesize(field: &ScaleField, psi: &Kernel) -> Result<Vec<Vec<Complex64>>> {
    let grid = &field.grid;
    if grid.dim() != 1 || psi.dim() != 1 {
        return Err(TslError::InvalidParameter("synthesis is one-dimensional".into()));
    }
    let ax = *grid.axis(0);
    let n = ax.count;
    let ys = field.ladder.samples();
    let terms: Vec<Vec<Vec<Complex64>>> = (0..ys.len())
        .into_par_iter()
        .map(|s| {
            let mult: Vec<Complex64> = (0..n).map(|k| psi.spectrum_at1(ys[s] * ax.u(k))).collect();
            (0..field.m)
                .map(|c| {
                    let slice = field.slice(s, c);
                    if slice.iter().all(|v| *v == ZERO) {
                        return Ok(vec![ZERO; n]);
                    }
                    let hat = forward_spectrum(slice, grid, EdgeCheck::Waive)?;
                    let prod: Vec<Complex64> = hat.iter().zip(&mult).map(|(a, b)| a * b).collect();
                    Ok(inverse_spectrum(&prod, grid))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let norms: Vec<f64> = terms.iter().map(|t| slice_norm(t, ax.spacing)).collect();
    let peak = norms.iter().copied().fold(0.0, f64::max);
    let mut out = vec![vec![ZERO; n]; field.m];
    if peak == 0.0 {
        return Ok(out);
    }
    let (first, last) = (norms[0], norms[norms.len() - 1]);
    if ys.len() > 1 && (first > TRUNCATION_TOL * peak || last > TRUNCATION_TOL * peak) {
        return Err(TslError::LadderTruncation(format!(
            "end terms {:.3e} and {:.3e} relative to the largest term",
            first / peak,
            last / peak
        )));
    }
    for (t, w) in terms.iter().zip(field.ladder.weights()) {
        for c in 0..field.m {
            for i in 0..n {
                out[c][i] += t[c][i] * *w;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    pub calibration: Complex64,
    pub relative_l2_error: f64,
    /// Set when `f` had a polynomial part; it is dropped before the transform.
    pub poly_excluded: bool,
    pub scales: usize,
}

fn strip_poly(f: &Signal) -> (Signal, bool) {
    let mut g = f.clone();
    let had = !g.poly.is_empty();
    g.poly.clear();
    (g, had)
}

/// `c^{-1} M_η W_ψ f` on `grid`, compared with the sampled and wave parts of `f`.
pub fn reconstruct(
    f: &Signal,
    psi: &Kernel,
    eta: &Kernel,
    grid: &UniformGrid,
    ladder: &ScaleLadder,
) -> Result<(Vec<Vec<Complex64>>, ReconstructionReport)> {
    if !is_nondegenerate(psi, DEFAULT_RAYS, crate::kernels::SUPPORT_TOL) {
        return Err(TslError::DegenerateKernel(psi.name().to_string()));
    }
    let cal = calibration_constant(psi, eta, DEFAULT_RAYS, 1e-6)?;
    let (g, poly_excluded) = strip_poly(f);
    let field = wavelet_transform(&g, psi, grid, ladder)?;
    let mut rec = synthesize(&field, eta)?;
    for comp in rec.iter_mut() {
        for v in comp.iter_mut() {
            *v /= cal.value;
        }
    }
    let xs = grid.axis(0).points();
    let (mut num, mut den) = (0.0, 0.0);
    for c in 0..g.m {
        for (i, &x) in xs.iter().enumerate() {
            let mut r = g.waves_at(c, x);
            if let Some(s) = &g.smooth {
                r += s.value_at(c, x);
            }
            num += (rec[c][i] - r).norm_sqr();
            den += r.norm_sqr();
        }
    }
    let relative_l2_error = if den > 0.0 { (num / den).sqrt() } else { (num * grid.axis(0).spacing).sqrt() };
    let report = ReconstructionReport { calibration: cal.value, relative_l2_error, poly_excluded, scales: ladder.len() };
    Ok((rec, report))
}

/// All moments vanish numerically: `|ρ̂| ≤ tol · max |ρ̂|` on the four spectral bins nearest 0.
pub fn spectrum_flat_at_origin(rho: &Kernel, tol: f64) -> bool {
    let peak = rho.spectral().iter().map(|v| v.norm()).fold(0.0, f64::max);
    let du = rho.grid().axis(0).du();
    (-4..=4).all(|k| rho.spectrum_at1(k as f64 * du).norm() <= tol * peak)
}

/// `c^{-1} Σ_j w_j ∫ W_ψ f(x, y_j) W_{conj η} ρ(x, y_j) dx`, which equals `⟨f, ρ⟩` for `ρ ∈ S₀`.
///
/// `ρ` is sampled on its own grid, which also carries the `x` quadrature.
pub fn desingularize_pairing(
    f: &Signal,
    rho: &Kernel,
    psi: &Kernel,
    eta: &Kernel,
    ladder: &ScaleLadder,
) -> Result<Vec<Complex64>> {
    if rho.dim() != 1 {
        return Err(TslError::InvalidParameter("pairings are one-dimensional".into()));
    }
    if !spectrum_flat_at_origin(rho, ADMISSIBILITY_TOL) {
        return Err(TslError::Precondition(format!("{} is not flat at the origin", rho.name())));
    }
    let cal = calibration_constant(psi, eta, DEFAULT_RAYS, 1e-6)?;
    let grid = rho.grid().clone();
    let ax = *grid.axis(0);
    let rs = Signal::smooth_components(grid.clone(), vec![rho.spatial().to_vec()], EdgeCheck::default())?;
    let wr = regularize(&rs, &eta.reflected()?, &grid, ladder)?;
    let mut regular = f.clone();
    regular.diracs.clear();
    let wf = if regular.smooth.is_none() && regular.poly.is_empty() && regular.waves.is_empty() {
        None
    } else {
        Some(wavelet_transform(&regular, psi, &grid, ladder)?)
    };
    // Dirac terms: ∫ y^{-1-m} ψ*^{(m)}((x − x0)/y) V(x) dx = y^{-m} ∫ ψ*^{(m)}(s) V(x0 + y s) ds
    let psi_star = psi.reflected_conjugate()?;
    let reach = crate::transform::kernel_radius(psi);
    let nodes = (2.0 * reach / DIRAC_STEP).ceil() as usize + 1;
    let s_nodes: Vec<f64> = (0..nodes).map(|k| -reach + k as f64 * DIRAC_STEP).collect();
    let mut out = vec![ZERO; f.m];
    for (s, (w, &y)) in ladder.weights().iter().zip(ladder.samples()).enumerate() {
        let r = wr.slice(s, 0);
        if let Some(wf) = &wf {
            for (c, o) in out.iter_mut().enumerate() {
                let prod: Vec<Complex64> = wf.slice(s, c).iter().zip(r).map(|(a, b)| a * b).collect();
                *o += quadrature_complex(&prod, &grid, EdgeCheck::Waive)? * *w;
            }
        }
        for d in &f.diracs {
            let mut acc = ZERO;
            for (k, &t) in s_nodes.iter().enumerate() {
                let x = d.location + y * t;
                if x < ax.origin || x > ax.last() {
                    continue;
                }
                let wk = if k == 0 || k == nodes - 1 { 0.5 } else { 1.0 };
                acc += psi_star.deriv_at(d.order, t) * lagrange_equispaced(r, ax.origin, ax.spacing, x, 8) * wk;
            }
            acc *= DIRAC_STEP * y.powi(-(d.order as i32));
            for (c, o) in out.iter_mut().enumerate() {
                *o += acc * d.weight[c] * *w;
            }
        }
    }
    Ok(out.into_iter().map(|v| v / cal.value).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{annular_exp, gaussian_heat, mexican_hat, psi1, s0_bump};
    use crate::signals::pair;
    use crate::testutil::adaptive_simpson;
    use proptest::prelude::*;

    #[test]
    fn mexican_hat_calibration() {
        let h = mexican_hat(1).unwrap();
        let c = calibration_constant(&h, &h, 16, 1e-9).unwrap();
        // 2π ∫ r³ e^{-r²} dr = π Γ(2)
        assert!((c.value.re - PI).abs() < 1e-8 && c.value.im.abs() < 1e-15);
        let h2 = mexican_hat(2).unwrap();
        let c2 = calibration_constant(&h2, &h2, 16, 1e-9).unwrap();
        // (2π)² ∫ r⁴ e^{-r²} dr/r = 2π²
        assert!((c2.value.re - 2.0 * PI * PI).abs() < 1e-7);
    }

    #[test]
    fn psi1_calibration_matches_bessel() {
        let p = psi1().unwrap();
        let c = calibration_constant(&p, &p, 16, 1e-9).unwrap();
        // K₀(4) = ∫₀^∞ e^{-4 cosh s} ds
        let k0 = adaptive_simpson(&|s: f64| (-4.0 * s.cosh()).exp(), 0.0, 10.0, 1e-15);
        let direct = adaptive_simpson(&|r: f64| if r == 0.0 { 0.0 } else { (-2.0 * r - 2.0 / r).exp() / r }, 0.0, 30.0, 1e-15);
        assert!((2.0 * k0 - 0.022319352171706046).abs() < 1e-12);
        assert!((direct - 2.0 * k0).abs() < 1e-10);
        assert!((c.value.re - 2.0 * k0).abs() < 1e-6 * 2.0 * k0);
    }

    #[test]
    fn calibration_errors() {
        let a = s0_bump(1.0, 0.5, 1).unwrap();
        let b = s0_bump(3.0, 0.5, 1).unwrap();
        assert!(matches!(calibration_constant(&a, &b, 16, 1e-6), Err(TslError::ZeroCalibration(_))));
        let g = gaussian_heat(1).unwrap();
        assert!(matches!(calibration_constant(&g, &g, 16, 1e-6), Err(TslError::Precondition(_))));
        let one_sided = crate::kernels::cone_exp(1.0).unwrap();
        let h = mexican_hat(1).unwrap();
        let r = calibration_constant(&one_sided, &h, 16, 1e-6);
        assert!(matches!(r, Err(TslError::AnisotropicCalibration { .. })), "{r:?}");
    }

    #[test]
    fn calibration_sesquilinear() {
        let h = mexican_hat(1).unwrap();
        let p = psi1().unwrap();
        let base = calibration_constant(&h, &p, 4, 1e-9).unwrap().value;
        let a = Complex64::new(0.5, -2.0);
        let left = calibration_constant(&h.scaled(a), &p, 4, 1e-9).unwrap().value;
        let right = calibration_constant(&h, &p.scaled(a), 4, 1e-9).unwrap().value;
        assert!((left - a.conj() * base).norm() < 1e-14 * base.norm() * 10.0);
        assert!((right - a * base).norm() < 1e-14 * base.norm() * 10.0);
    }

    #[test]
    fn reconstruction_wavelets_calibrate_to_one() {
        let g = gaussian_heat(1).unwrap();
        let eta = reconstruction_wavelet(&g, &Annulus::new(0.5, 1.5)).unwrap();
        let c = calibration_constant(&g, &eta, 16, 1e-9).unwrap();
        assert!((c.value - 1.0).norm() < 1e-6);
        // independent check of the ray integral on the annulus
        let d = adaptive_simpson(&|r: f64| Annulus::new(0.5, 1.5).value(r) * (-2.0 * r * r).exp() / r, 0.5, 1.5, 1e-14);
        assert!((eta.spectrum_at1(1.0).re - (-1.0f64).exp() / d).abs() < 1e-9);

        let a = annular_exp(0.5, 1).unwrap();
        let k = Annulus::new(0.6, 1.2);
        let eta = reconstruction_wavelet(&a, &k).unwrap();
        assert!((calibration_constant(&a, &eta, 16, 1e-9).unwrap().value - 1.0).norm() < 1e-6);
        let ax = a.grid().axis(0);
        for k in 0..ax.count {
            if ax.u(k).abs() > 1.2 || ax.u(k).abs() < 0.6 {
                assert_eq!(eta.spectral()[k], ZERO);
            }
        }
        assert!(annulus_covers_index(&a, &Annulus::new(0.2, 1.2)).unwrap());

        assert!(matches!(
            reconstruction_wavelet(&a, &Annulus::new(0.1, 0.45)),
            Err(TslError::DivisionUnderflow { .. })
        ));
        let u1 = crate::kernels::gaussian_u1().unwrap();
        assert!(matches!(reconstruction_wavelet(&u1, &Annulus::new(0.5, 1.5)), Err(TslError::DegenerateKernel(_))));

        let g2 = gaussian_heat(2).unwrap();
        let eta2 = reconstruction_wavelet(&g2, &Annulus::new(0.5, 1.5)).unwrap();
        let c2 = calibration_constant(&g2, &eta2, 64, 1e-6).unwrap();
        assert!((c2.value - 1.0).norm() < 1e-6);
    }

    fn one_slice_field(grid: &UniformGrid, ladder: &ScaleLadder, j: usize, profile: &[f64]) -> ScaleField {
        let n = grid.len();
        let mut values = vec![ZERO; n * ladder.len()];
        for i in 0..n {
            values[j * n + i] = Complex64::new(profile[i], 0.0);
        }
        ScaleField { grid: grid.clone(), ladder: ladder.clone(), m: 1, values, provenance: Default::default() }
    }

    #[test]
    fn single_slice_synthesis() {
        let grid = UniformGrid::centered_line(32.0, 1024).unwrap();
        let lad = ScaleLadder::new(0.2, 5.0, 9).unwrap();
        let xs = grid.axis(0).points();
        let profile: Vec<f64> = xs.iter().map(|x| (-x * x / 2.0).exp()).collect();
        let g = gaussian_heat(1).unwrap();
        let zero = one_slice_field(&grid, &lad, 4, &vec![0.0; 1024]);
        assert!(synthesize(&zero, &g).unwrap()[0].iter().all(|v| *v == ZERO));
        let field = one_slice_field(&grid, &lad, 4, &profile);
        let out = synthesize(&field, &g).unwrap();
        let (y, w) = (lad.samples()[4], lad.weights()[4]);
        // Gaussian variances add: 1 + 2y²
        let v = 1.0 + 2.0 * y * y;
        for i in (0..1024).step_by(37) {
            let exact = w * (-xs[i] * xs[i] / (2.0 * v)).exp() / v.sqrt();
            assert!((out[0][i].re - exact).abs() < 1e-12, "{i}");
        }
        let edge = one_slice_field(&grid, &lad, 0, &profile);
        assert!(matches!(synthesize(&edge, &g), Err(TslError::LadderTruncation(_))));
    }

    #[test]
    fn reconstruct_bump_and_wave() {
        let h = mexican_hat(1).unwrap();
        let grid = UniformGrid::centered_line(409.6, 32768).unwrap();
        let bump = s0_bump(1.2, 2.0, 1).unwrap().resampled(grid.clone()).unwrap();
        let f = Signal::smooth_components(grid.clone(), vec![bump.spatial().to_vec()], EdgeCheck::default()).unwrap();
        let lad = ScaleLadder::per_octave(0.016, 40.0, 8).unwrap();
        let (_, rep) = reconstruct(&f, &h, &h, &grid, &lad).unwrap();
        assert!((rep.calibration.re - PI).abs() < 1e-8);
        assert!(rep.relative_l2_error < 1e-3, "{rep:?}");

        let wgrid = UniformGrid::centered_line(64.0 * PI, 4096).unwrap();
        let lad = ScaleLadder::per_octave(1e-3, 1e3, 8).unwrap();
        let (_, rep) = reconstruct(&Signal::wave(1.0, Complex64::new(1.0, 0.0)), &h, &h, &wgrid, &lad).unwrap();
        assert!(rep.relative_l2_error < 1e-3, "{rep:?}");

        let with_poly = f.add(&Signal::polynomial(&[1.0, 2.0])).unwrap();
        let lad = ScaleLadder::per_octave(0.016, 40.0, 8).unwrap();
        let (_, rep) = reconstruct(&with_poly, &h, &h, &grid, &lad).unwrap();
        assert!(rep.poly_excluded && rep.relative_l2_error < 1e-3);
    }

    #[test]
    fn desingularization_examples() {
        let h = mexican_hat(1).unwrap();
        let rho = fine_bump();
        let lad = ScaleLadder::per_octave(0.016, 40.0, 8).unwrap();
        let d = desingularize_pairing(&Signal::dirac(0.0, 0), &rho, &h, &h, &lad).unwrap()[0];
        assert!((d - rho.value_at(0.0)).norm() < 1e-4 * rho.value_at(0.0).norm(), "{d}");
        let f = Signal::smooth_components(rho.grid().clone(), vec![rho.spatial().to_vec()], EdgeCheck::default()).unwrap();
        let sq: Vec<Complex64> = rho.spatial().iter().map(|v| v * v).collect();
        let oracle = quadrature_complex(&sq, rho.grid(), EdgeCheck::Waive).unwrap();
        let d = desingularize_pairing(&f, &rho, &h, &h, &lad).unwrap()[0];
        assert!((d - oracle).norm() < 1e-4 * oracle.norm(), "{d} {oracle}");
        let p = desingularize_pairing(&Signal::polynomial(&[1.0, -0.5, 0.25]), &rho, &h, &h, &lad).unwrap()[0];
        assert!(p.norm() < 1e-6, "{p}");
        let g = gaussian_heat(1).unwrap();
        assert!(desingularize_pairing(&Signal::dirac(0.0, 0), &g, &h, &h, &lad).is_err());
    }

    fn fine_bump() -> Kernel {
        s0_bump(1.2, 2.0, 1).unwrap().resampled(UniformGrid::centered_line(409.6, 32768).unwrap()).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(6))]

        #[test]
        fn desingularization_matches_pairing(x0 in -3.0f64..3.0, order in 0usize..3, w in 0.5f64..2.0) {
            let h = mexican_hat(1).unwrap();
            let rho = fine_bump().translated(&[0.7]).unwrap();
            let lad = ScaleLadder::per_octave(0.016, 40.0, 8).unwrap();
            let f = Signal::dirac(x0, order).scaled(w).add(&Signal::wave(0.8, Complex64::new(0.3, 0.1))).unwrap();
            let d = desingularize_pairing(&f, &rho, &h, &h, &lad).unwrap()[0];
            let p = pair(&f, &rho).unwrap()[0];
            prop_assert!((d - p).norm() < 1e-4 * p.norm().max(1e-3), "{} {}", d, p);
        }
    }
}
