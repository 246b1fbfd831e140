//! Small numerical helpers shared by the analysis modules.

use nalgebra::{DMatrix, DVector};

/// Finite-difference weights for the `m`-th derivative at 0 on arbitrary nodes (Fornberg).
pub fn fornberg_weights(m: usize, nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    let mut c = vec![vec![0.0; m + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = nodes[0];
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i];
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[m]).collect()
}

/// Lagrange interpolation through equispaced samples `values[i]` at `x0 + i h`, evaluated at `x`.
pub fn lagrange_equispaced<T>(values: &[T], x0: f64, h: f64, x: f64, order: usize) -> T
where
    T: Copy + std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T> + Default,
{
    let n = values.len();
    let p = (x - x0) / h;
    let half = order / 2;
    let base = (p.floor() as isize - half as isize + 1).clamp(0, n as isize - order as isize) as usize;
    let mut acc = T::default();
    for i in 0..order {
        let xi = (base + i) as f64;
        if (p - xi).abs() < 1e-14 {
            return values[base + i];
        }
        let mut w = 1.0;
        for j in 0..order {
            if j != i {
                let xj = (base + j) as f64;
                w *= (p - xj) / (xi - xj);
            }
        }
        acc = acc + values[base + i] * w;
    }
    acc
}

/// Least-squares solution of `A c ≈ b`.
pub fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let svd = a.clone().svd(true, true);
    svd.solve(b, 1e-12).ok()
}

/// Slope and intercept of the least-squares line through `(x, y)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Quintic smoothstep: 0 at `s <= 0`, 1 at `s >= 1`, C² in between.
pub fn smoothstep5(s: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else if s >= 1.0 {
        1.0
    } else {
        s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
    }
}

fn flat(s: f64) -> f64 {
    if s > 0.0 {
        (-1.0 / s).exp()
    } else {
        0.0
    }
}

/// C^∞ transition from 0 (at `s <= 0`) to 1 (at `s >= 1`).
pub fn smooth_transition(s: f64) -> f64 {
    let a = flat(s);
    let b = flat(1.0 - s);
    if a + b == 0.0 {
        0.0
    } else {
        a / (a + b)
    }
}

/// Physicists' Hermite polynomial `H_n(x)`.
pub fn hermite_h(n: usize, x: f64) -> f64 {
    let (mut a, mut b) = (1.0, 2.0 * x);
    if n == 0 {
        return a;
    }
    for k in 1..n {
        let c = 2.0 * x * b - 2.0 * k as f64 * a;
        a = b;
        b = c;
    }
    b
}

/// Probabilists' Hermite polynomial `He_n(x)`.
pub fn hermite_he(n: usize, x: f64) -> f64 {
    let (mut a, mut b) = (1.0, x);
    if n == 0 {
        return a;
    }
    for k in 1..n {
        let c = x * b - k as f64 * a;
        a = b;
        b = c;
    }
    b
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        0.0
    } else {
        factorial(n) / (factorial(k) * factorial(n - k))
    }
}

/// Empirical quantile (linear interpolation between order statistics).
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let i = pos.floor() as usize;
    let t = pos - i as f64;
    if i + 1 < v.len() {
        v[i] * (1.0 - t) + v[i + 1] * t
    } else {
        v[i]
    }
}
