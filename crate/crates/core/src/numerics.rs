//! Small numerical helpers shared by the measure, operator and solver modules.

use gauss_quad::legendre::GaussLegendre;
use statrs::function::gamma::gamma;
use std::f64::consts::PI;

/// Radial grading between consecutive shell boundaries.
pub const SHELL_RATIO: f64 = 1.189_207_115_002_721; // 2^(1/4)

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    GaussLegendre::new(n.max(2))
        .expect("degree >= 2")
        .as_node_weight_pairs()
        .to_vec()
}

/// Map a [-1, 1] rule to [a, b].
pub fn map_rule(rule: &[(f64, f64)], a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (b + a);
    rule.iter().map(move |&(x, w)| (mid + half * x, half * w))
}

/// Composite Gauss-Legendre integral with `panels` equal panels.
pub fn integrate<F: FnMut(f64) -> f64>(rule: &[(f64, f64)], a: f64, b: f64, panels: usize, mut f: F) -> f64 {
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for k in 0..panels {
        let lo = a + k as f64 * h;
        for (x, w) in map_rule(rule, lo, lo + h) {
            total += w * f(x);
        }
    }
    total
}

/// Split `[a, b]` (`0 < a < b`) into geometrically graded shells whose ratio does
/// not exceed [`SHELL_RATIO`]; the boundaries hit `a` and `b` exactly.
pub fn log_shells(a: f64, b: f64) -> Vec<(f64, f64)> {
    assert!(a > 0.0 && b > a, "log_shells requires 0 < a < b");
    let n = ((b / a).ln() / SHELL_RATIO.ln()).ceil().max(1.0) as usize;
    let step = (b / a).ln() / n as f64;
    (0..n)
        .map(|k| {
            let lo = if k == 0 { a } else { a * (step * k as f64).exp() };
            let hi = if k + 1 == n { b } else { a * (step * (k + 1) as f64).exp() };
            (lo, hi)
        })
        .collect()
}

/// Unit directions and their angular weights: `{+1, -1}` in one dimension, a
/// uniform trapezoid rule on the circle in two.
pub fn directions(dim: usize, n_theta: usize) -> Vec<([f64; 2], f64)> {
    match dim {
        1 => vec![([1.0, 0.0], 1.0), ([-1.0, 0.0], 1.0)],
        _ => {
            let w = 2.0 * PI / n_theta as f64;
            (0..n_theta)
                .map(|k| {
                    let t = 2.0 * PI * k as f64 / n_theta as f64;
                    ([t.cos(), t.sin()], w)
                })
                .collect()
        }
    }
}

/// Surface measure of the unit sphere in `R^dim` (2 for dim 1, 2*pi for dim 2).
pub fn sphere_area(dim: usize) -> f64 {
    match dim {
        1 => 2.0,
        2 => 2.0 * PI,
        d => 2.0 * PI.powf(d as f64 / 2.0) / gamma(d as f64 / 2.0),
    }
}

/// Normalization constant of the fractional Laplacian in `R^dim`, so that the
/// operator has Fourier symbol `-|k|^alpha`.
pub fn fractional_constant(dim: usize, alpha: f64) -> f64 {
    let d = dim as f64;
    alpha * 2f64.powf(alpha - 1.0) * gamma(0.5 * (d + alpha)) / (PI.powf(0.5 * d) * gamma(1.0 - 0.5 * alpha))
}

/// `(e^z - 1 - z) / z^2`, accurate near zero.
pub fn exp_remainder_ratio(z: f64) -> f64 {
    if z.abs() < 1e-2 {
        0.5 + z * (1.0 / 6.0 + z * (1.0 / 24.0 + z * (1.0 / 120.0 + z / 720.0)))
    } else {
        (z.exp_m1() - z) / (z * z)
    }
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shells_cover_interval() {
        let s = log_shells(0.05, 3.0);
        assert_eq!(s.first().unwrap().0, 0.05);
        assert_eq!(s.last().unwrap().1, 3.0);
        for w in s.windows(2) {
            assert_eq!(w[0].1, w[1].0);
        }
        assert!(s.iter().all(|(a, b)| b / a <= SHELL_RATIO * (1.0 + 1e-12)));
    }

    #[test]
    fn fractional_constant_known_values() {
        // alpha = 1 in one dimension is the Cauchy kernel 1/(pi z^2).
        assert!((fractional_constant(1, 1.0) - 1.0 / PI).abs() < 1e-14);
        // alpha -> 2 behaves like (2 - alpha) in 1-D.
        let c = fractional_constant(1, 1.999);
        assert!((c / 0.001 - 1.0).abs() < 1e-2);
    }

    #[test]
    fn exp_remainder_is_continuous() {
        for z in [0.0099, -0.0099] {
            let direct = (f64::exp_m1(z) - z) / (z * z);
            assert!((exp_remainder_ratio(z) - direct).abs() < 1e-11);
        }
        assert!((exp_remainder_ratio(0.0) - 0.5).abs() < 1e-15);
    }
}
