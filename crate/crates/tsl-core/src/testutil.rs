//! Independent oracles for unit tests.

/// Adaptive Simpson quadrature on `[a, b]`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64, m: f64, fm: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            rec(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1)
                + rec(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1)
        }
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    rec(f, a, fa, b, fb, m, fm, whole, tol, 40)
}

/// Integral over ℝ split into unit pieces on `[-l, l]`.
pub fn integrate_line(f: &dyn Fn(f64) -> f64, l: f64, tol: f64) -> f64 {
    let n = (2.0 * l).ceil() as usize;
    (0..n)
        .map(|i| {
            let a = -l + i as f64 * 2.0 * l / n as f64;
            adaptive_simpson(f, a, a + 2.0 * l / n as f64, tol / n as f64)
        })
        .sum()
}
