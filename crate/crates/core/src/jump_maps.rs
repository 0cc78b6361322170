//! Gradient-dependent jump maps `j_i(p, z)`, their linearizations
//! `sigma_i(p) = D_z j_i(p, 0)` and the limiting local operator `L_0(p, X)`.
//!
//! Every family here is linear in the jump variable, `j(p, z) = sigma(p) z`, so the
//! linearization is exact and the operator evaluation only needs `sigma(p)` once
//! per gradient.

use crate::error::{Error, Result};
use crate::levy_measures::{self, LevyMeasureSpec, Part};
use crate::numerics::norm;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Scalar modulation `a(p)` of the isotropic family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScalarFn {
    Const1,
    /// `|p|^m`, `m >= 0`.
    AbsPower { m: f64 },
}

impl ScalarFn {
    pub fn eval(&self, p: &[f64]) -> f64 {
        match self {
            ScalarFn::Const1 => 1.0,
            ScalarFn::AbsPower { m } => {
                let n = norm(p);
                if *m == 0.0 {
                    1.0
                } else {
                    n.powf(*m)
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JumpFamily {
    /// `j = z`.
    Identity,
    /// `j = p z` with scalar `z`: nonlocal infinity-Laplacian.
    DirectionalGradient,
    /// `j = sigma_p(p) z`: nonlocal p-Laplacian in factored form.
    PLaplaceFull,
    /// `j = |p|^((q-2)/2) z`, plus a `(q - 2)`-weighted directional term with
    /// `j = |p|^((q-4)/2) p z` driven by a one-dimensional companion measure.
    PLaplaceSplit,
    /// `j = sigma~(p) z`: nonlocal mean curvature of graphs.
    Curvature,
    /// `j = a(p)^(1/alpha) z`: `a(Du)` times the fractional Laplacian.
    IsotropicScalar { a: ScalarFn, alpha: f64 },
    /// `j = p z` with compensator `(e^z - 1) |p|^2` in place of `j . p`.
    ExponentialCompensator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpMapSpec {
    pub family: JumpFamily,
    /// p-Laplace exponent (ignored by other families).
    #[serde(default = "default_p_exp")]
    pub p_exp: f64,
    pub dim_x: usize,
}

fn default_p_exp() -> f64 {
    2.0
}

impl JumpMapSpec {
    pub fn new(family: JumpFamily, dim_x: usize) -> Self {
        Self {
            family,
            p_exp: 2.0,
            dim_x,
        }
    }

    pub fn with_p_exp(mut self, p_exp: f64) -> Self {
        self.p_exp = p_exp;
        self
    }

    /// Dimension of the jump variable this family expects.
    pub fn dim_z(&self) -> usize {
        match self.family {
            JumpFamily::DirectionalGradient | JumpFamily::ExponentialCompensator => 1,
            _ => self.dim_x,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.dim_x) {
            return Err(Error::UnsupportedDimension(self.dim_x));
        }
        if matches!(self.family, JumpFamily::PLaplaceFull | JumpFamily::PLaplaceSplit) && !(self.p_exp >= 2.0) {
            return Err(Error::invalid("p_exp", format!("{} < 2", self.p_exp)));
        }
        if let JumpFamily::IsotropicScalar { a, alpha } = &self.family {
            if !(*alpha > 0.0 && *alpha < 2.0) {
                return Err(Error::invalid("alpha", "isotropic scaling needs alpha in (0,2)"));
            }
            if let ScalarFn::AbsPower { m } = a {
                if !(*m >= 0.0) {
                    return Err(Error::invalid("a_function", "abs_power exponent must be >= 0"));
                }
            }
        }
        Ok(())
    }

    /// Whether the compensator uses `(e^z - 1)|p|^2` instead of `j . p`.
    pub fn exponential_compensator(&self) -> bool {
        matches!(self.family, JumpFamily::ExponentialCompensator)
    }

    /// `C` with `|j(p, z)| <= C |z|` for all `|p| <= r`.
    pub fn linear_bound(&self, r: f64) -> f64 {
        let q = self.p_exp;
        match &self.family {
            JumpFamily::Identity => 1.0,
            JumpFamily::DirectionalGradient | JumpFamily::ExponentialCompensator => r,
            JumpFamily::PLaplaceFull => r.max(if q == 2.0 { 1.0 } else { 0.0 }).powf(0.5 * (q - 2.0)) * (q - 1.0).sqrt(),
            JumpFamily::PLaplaceSplit => r.powf(0.5 * (q - 2.0)).max(if q == 2.0 { 1.0 } else { 0.0 }),
            JumpFamily::Curvature => 1.0,
            JumpFamily::IsotropicScalar { a, alpha } => match a {
                ScalarFn::Const1 => 1.0,
                ScalarFn::AbsPower { m } => r.powf(m / alpha),
            },
        }
    }
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// `a_q(xi) = I + r_q xi xi^T / |xi|^2` with `r_q = -1 + sqrt(q - 1)`.
pub fn p_laplace_factor(p_exp: f64, xi: &[f64]) -> DMatrix<f64> {
    let n = xi.len();
    let mut a = DMatrix::identity(n, n);
    let s = xi.iter().map(|x| x * x).sum::<f64>();
    if s > 0.0 {
        let r = -1.0 + (p_exp - 1.0).sqrt();
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] += r * xi[i] * xi[j] / s;
            }
        }
    }
    a
}

/// `a~(xi) = I - xi xi^T / |xi|^2 (1 - 1/sqrt(1 + |xi|^2))`.
pub fn curvature_factor(xi: &[f64]) -> DMatrix<f64> {
    let n = xi.len();
    let s = xi.iter().map(|x| x * x).sum::<f64>();
    let root = (1.0 + s).sqrt();
    // (1 - 1/root) / s rewritten without cancellation
    let coef = 1.0 / (root * (1.0 + root));
    let mut a = DMatrix::identity(n, n);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] -= coef * xi[i] * xi[j];
        }
    }
    a
}

/// `sigma_i(p)` as an `N x P` matrix.
pub fn eval_sigma(spec: &JumpMapSpec, _part: Part, p: &[f64]) -> Result<DMatrix<f64>> {
    check_dim(spec.dim_x, p.len())?;
    let n = spec.dim_x;
    let q = spec.p_exp;
    let np = norm(p);
    let col = || DMatrix::from_column_slice(n, 1, p);
    Ok(match &spec.family {
        JumpFamily::Identity => DMatrix::identity(n, n),
        JumpFamily::DirectionalGradient | JumpFamily::ExponentialCompensator => col(),
        JumpFamily::PLaplaceFull => {
            if q == 2.0 {
                DMatrix::identity(n, n)
            } else if np == 0.0 {
                DMatrix::zeros(n, n)
            } else {
                p_laplace_factor(q, p) * np.powf(0.5 * (q - 2.0))
            }
        }
        JumpFamily::PLaplaceSplit => {
            if q == 2.0 {
                DMatrix::identity(n, n)
            } else {
                DMatrix::identity(n, n) * np.powf(0.5 * (q - 2.0))
            }
        }
        JumpFamily::Curvature => {
            let s = np * np;
            curvature_factor(p) * (1.0 + s).powf(-0.25)
        }
        JumpFamily::IsotropicScalar { a, alpha } => DMatrix::identity(n, n) * a.eval(p).powf(1.0 / alpha),
    })
}

/// Linearization `|p|^((q-4)/2) p` of the directional term of the split
/// p-Laplacian (`N x 1`). Its magnitude is `|p|^((q-2)/2)`, so it extends
/// continuously by zero for `q > 2`; at `q = 2` the direction is undefined.
pub fn split_directional_sigma(spec: &JumpMapSpec, p: &[f64]) -> Result<DMatrix<f64>> {
    check_dim(spec.dim_x, p.len())?;
    let np = norm(p);
    if np == 0.0 {
        if spec.p_exp > 2.0 {
            return Ok(DMatrix::zeros(spec.dim_x, 1));
        }
        return Err(Error::SingularGradient);
    }
    Ok(DMatrix::from_column_slice(spec.dim_x, 1, p) * np.powf(0.5 * (spec.p_exp - 4.0)))
}

/// `j_i(p, z)`.
pub fn eval_jump(spec: &JumpMapSpec, part: Part, p: &[f64], z: &[f64]) -> Result<DVector<f64>> {
    check_dim(spec.dim_z(), z.len())?;
    let sigma = eval_sigma(spec, part, p)?;
    Ok(&sigma * DVector::from_column_slice(z))
}

/// Concentration data and jump family defining `L_0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalOperatorSpec {
    pub jump: JumpMapSpec,
    /// Covariance factors of the two measures (`P x k`); only `A A^T` enters.
    pub a1: DMatrix<f64>,
    pub a2: DMatrix<f64>,
    /// Drift vector `a` (`P`).
    pub drift: DVector<f64>,
    /// Covariance factor of the one-dimensional companion measure of the split
    /// p-Laplacian (zero otherwise).
    pub split_factor: f64,
}

impl LocalOperatorSpec {
    /// `A_1 = c1 I`, `A_2 = c2 I`, drift `a`.
    pub fn isotropic(jump: JumpMapSpec, c1: f64, c2: f64, drift: &[f64]) -> Self {
        let p = jump.dim_z();
        Self {
            a1: DMatrix::identity(p, p) * c1,
            a2: DMatrix::identity(p, p) * c2,
            drift: if drift.is_empty() {
                DVector::zeros(p)
            } else {
                DVector::from_column_slice(drift)
            },
            split_factor: if matches!(jump.family, JumpFamily::PLaplaceSplit) { c1 } else { 0.0 },
            jump,
        }
    }
}

/// `L_0(p, X) = 1/2 tr[s1 s1^T X] + 1/2 tr[s2 s2^T X] + b(p) . p` with
/// `s_i = sigma_i(p) A_i` and `b(p) = a^T sigma_2(p)`.
pub fn local_l0(spec: &LocalOperatorSpec, p: &[f64], x: &DMatrix<f64>) -> Result<f64> {
    let n = spec.jump.dim_x;
    check_dim(n, p.len())?;
    check_dim(n, x.nrows())?;
    check_dim(n, x.ncols())?;
    let s1 = eval_sigma(&spec.jump, Part::Compensated, p)?;
    let s2 = eval_sigma(&spec.jump, Part::Uncompensated, p)?;
    check_dim(s1.ncols(), spec.a1.nrows())?;
    check_dim(s2.ncols(), spec.a2.nrows())?;
    check_dim(s2.ncols(), spec.drift.len())?;
    let t1 = &s1 * &spec.a1;
    let t2 = &s2 * &spec.a2;
    let mut value = 0.5 * (&t1 * t1.transpose() * x).trace() + 0.5 * (&t2 * t2.transpose() * x).trace();
    // b(p) . p = a^T sigma_2(p) p
    let pv = DVector::from_column_slice(p);
    value += (spec.drift.transpose() * s2.transpose() * &pv)[(0, 0)];
    if matches!(spec.jump.family, JumpFamily::PLaplaceSplit) && spec.split_factor != 0.0 {
        let d = split_directional_sigma(&spec.jump, p)?;
        let t = d * spec.split_factor;
        value += 0.5 * (spec.jump.p_exp - 2.0) * (&t * t.transpose() * x).trace();
    }
    Ok(value)
}

/// Configurable pass thresholds of the hypothesis probes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssumptionThresholds {
    /// Largest value accepted as finite.
    pub finite_bound: f64,
    /// Required decay `omega(eta_min) / omega(eta_max)` of the continuity modulus.
    pub modulus_ratio: f64,
    /// Largest accepted `|(j(p,hz) - j(p,0))/h - sigma(p) z|`.
    pub linearization_tol: f64,
}

impl Default for AssumptionThresholds {
    fn default() -> Self {
        Self {
            finite_bound: 1e12,
            modulus_ratio: 0.1,
            linearization_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    /// Sampled `sup_{|p|<r} int |j_1(p,z)|^2 dmu_1`.
    pub c_jr: f64,
    /// `(eta, omega(eta))` with `omega(eta) = sup_{|p-q|=eta} int |j_1(p,z)-j_1(q,z)|^2 dmu_1`.
    pub modulus: Vec<(f64, f64)>,
    /// `(shell outer radius, sup_p int_A |j_1|^2 dmu_1 / int_A |z|^2 dmu_1)` over dyadic shells.
    pub equi_integrability: Vec<(f64, f64)>,
    /// `(h, max |(j(p,hz)-j(p,0))/h - sigma(p)z|)`.
    pub linearization: Vec<(f64, f64)>,
    pub j1_pass: bool,
    pub j2_pass: bool,
    pub j3_pass: bool,
    pub j4_pass: bool,
}

impl AssumptionReport {
    pub fn passes(&self) -> bool {
        self.j1_pass && self.j2_pass && self.j3_pass && self.j4_pass
    }
}

/// `int |sigma z|^2 dmu = tr[sigma M sigma^T]` for a second-moment matrix `M`.
fn quadratic_energy(sigma: &DMatrix<f64>, m: &DMatrix<f64>) -> f64 {
    (sigma * m * sigma.transpose()).trace()
}

fn sample_ball(rng: &mut ChaCha8Rng, n: usize, r: f64) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| (2.0 * rng.random::<f64>() - 1.0) * r).collect();
        if norm(&v) < r {
            return v;
        }
    }
}

/// Numerical probes of the jump-map hypotheses on the ball `|p| < r`.
/// Report-only: nothing here blocks a solve.
pub fn validate_assumptions(
    jump: &JumpMapSpec,
    measure: &LevyMeasureSpec,
    r: f64,
    sample_count: usize,
    thresholds: &AssumptionThresholds,
) -> Result<AssumptionReport> {
    jump.validate()?;
    measure.validate()?;
    check_dim(jump.dim_z(), measure.dim_z)?;
    if !(r > 0.0) {
        return Err(Error::invalid("radius", "must be positive"));
    }
    let n = jump.dim_x;
    let p_dim = measure.dim_z;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut samples: Vec<Vec<f64>> = (0..sample_count.max(1)).map(|_| sample_ball(&mut rng, n, r)).collect();
    // deterministic points near the sphere and the origin
    let mut axis = vec![0.0; n];
    axis[0] = 0.999 * r;
    samples.push(axis.clone());
    samples.push(vec![0.0; n]);

    let to_mat = |m: [[f64; 2]; 2]| DMatrix::from_fn(p_dim, p_dim, |i, j| m[i][j]);
    let full = to_mat(levy_measures::moment_matrix(measure, Part::Compensated, 0.0, 1.0)?);

    let mut c_jr: f64 = 0.0;
    for p in &samples {
        let s = eval_sigma(jump, Part::Compensated, p)?;
        c_jr = c_jr.max(quadratic_energy(&s, &full));
    }
    let j1_pass = c_jr.is_finite() && c_jr < thresholds.finite_bound;

    let etas = [1e-1, 1e-2, 1e-3, 1e-4];
    let mut modulus = Vec::new();
    for &eta in &etas {
        let mut w: f64 = 0.0;
        for p in &samples {
            let dir = sample_ball(&mut rng, n, 1.0);
            let dn = norm(&dir).max(1e-300);
            let q: Vec<f64> = p.iter().zip(&dir).map(|(a, d)| a + eta * d / dn).collect();
            if norm(&q) >= r {
                continue;
            }
            let d = eval_sigma(jump, Part::Compensated, p)? - eval_sigma(jump, Part::Compensated, &q)?;
            w = w.max(quadratic_energy(&d, &full));
        }
        modulus.push((eta, w));
    }
    let first = modulus.first().map(|m| m.1).unwrap_or(0.0);
    let last = modulus.last().map(|m| m.1).unwrap_or(0.0);
    let j2_pass = last <= thresholds.modulus_ratio * first || last < 1e-14;

    let mut equi = Vec::new();
    let delta0 = 0.5;
    for k in 0..12 {
        let hi = delta0 * 0.5f64.powi(k);
        let lo = 0.5 * hi;
        let m = to_mat(levy_measures::moment_matrix(measure, Part::Compensated, lo, hi)?);
        let base = m.trace();
        if base <= 0.0 {
            continue;
        }
        let mut worst: f64 = 0.0;
        for p in &samples {
            let s = eval_sigma(jump, Part::Compensated, p)?;
            worst = worst.max(quadratic_energy(&s, &m) / base);
        }
        equi.push((hi, worst));
    }
    let j3_pass = equi.iter().all(|(_, v)| v.is_finite() && *v < thresholds.finite_bound);

    let mut linearization = Vec::new();
    let zdir: Vec<f64> = (0..p_dim).map(|i| if i == 0 { 1.0 } else { 0.5 }).collect();
    for &h in &[1e-2, 1e-4, 1e-6] {
        let mut worst: f64 = 0.0;
        for p in &samples {
            let hz: Vec<f64> = zdir.iter().map(|v| v * h).collect();
            let j_h = eval_jump(jump, Part::Compensated, p, &hz)?;
            let j_0 = eval_jump(jump, Part::Compensated, p, &vec![0.0; p_dim])?;
            let lin = eval_sigma(jump, Part::Compensated, p)? * DVector::from_column_slice(&zdir);
            let fd = (j_h - j_0) / h;
            worst = worst.max((fd - lin).norm());
        }
        linearization.push((h, worst));
    }
    let j4_pass = linearization.iter().all(|(_, e)| *e < thresholds.linearization_tol);

    Ok(AssumptionReport {
        c_jr,
        modulus,
        equi_integrability: equi,
        linearization,
        j1_pass,
        j2_pass,
        j3_pass,
        j4_pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn directional_jump_example() {
        let spec = JumpMapSpec::new(JumpFamily::DirectionalGradient, 2);
        let j = eval_jump(&spec, Part::Compensated, &[2.0, 0.0], &[0.5]).unwrap();
        assert_eq!(j.as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn zero_jump_maps_to_zero() {
        let fams = [
            JumpFamily::Identity,
            JumpFamily::PLaplaceFull,
            JumpFamily::PLaplaceSplit,
            JumpFamily::Curvature,
            JumpFamily::IsotropicScalar {
                a: ScalarFn::AbsPower { m: 1.0 },
                alpha: 1.0,
            },
        ];
        for fam in fams {
            let spec = JumpMapSpec::new(fam, 2).with_p_exp(3.0);
            let j = eval_jump(&spec, Part::Uncompensated, &[0.3, -1.0], &[0.0, 0.0]).unwrap();
            assert_eq!(j.norm(), 0.0);
        }
    }

    #[test]
    fn p_laplace_two_is_identity() {
        let spec = JumpMapSpec::new(JumpFamily::PLaplaceFull, 2).with_p_exp(2.0);
        for p in [[0.0, 0.0], [1.0, 2.0], [-3.0, 0.1]] {
            let s = eval_sigma(&spec, Part::Compensated, &p).unwrap();
            assert!((s - DMatrix::identity(2, 2)).norm() < 1e-15);
        }
    }

    #[test]
    fn p_laplace_five_example() {
        let spec = JumpMapSpec::new(JumpFamily::PLaplaceFull, 2).with_p_exp(5.0);
        let s = eval_sigma(&spec, Part::Compensated, &[1.0, 0.0]).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        assert!((s - expect).norm() < 1e-14);
    }

    #[test]
    fn curvature_example() {
        let spec = JumpMapSpec::new(JumpFamily::Curvature, 2);
        let s0 = eval_sigma(&spec, Part::Compensated, &[0.0, 0.0]).unwrap();
        assert!((s0 - DMatrix::identity(2, 2)).norm() < 1e-15);
        let s = eval_sigma(&spec, Part::Compensated, &[1.0, 0.0]).unwrap();
        let at = DMatrix::from_row_slice(2, 2, &[1.0 - (1.0 - 1.0 / 2f64.sqrt()), 0.0, 0.0, 1.0]);
        assert!((s - at / 2f64.powf(0.25)).norm() < 1e-14);
    }

    #[test]
    fn split_directional_extension() {
        let spec = JumpMapSpec::new(JumpFamily::PLaplaceSplit, 2).with_p_exp(3.0);
        assert_eq!(split_directional_sigma(&spec, &[0.0, 0.0]).unwrap().norm(), 0.0);
        let spec2 = JumpMapSpec::new(JumpFamily::PLaplaceSplit, 2).with_p_exp(2.0);
        assert_eq!(split_directional_sigma(&spec2, &[0.0, 0.0]).unwrap_err(), Error::SingularGradient);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let spec = JumpMapSpec::new(JumpFamily::Identity, 2);
        assert!(matches!(
            eval_jump(&spec, Part::Compensated, &[1.0], &[1.0, 0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            eval_jump(&spec, Part::Compensated, &[1.0, 0.0], &[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn l0_zero_hessian_no_drift() {
        let local = LocalOperatorSpec::isotropic(JumpMapSpec::new(JumpFamily::Identity, 1), 2f64.sqrt(), 0.0, &[]);
        assert_eq!(local_l0(&local, &[0.7], &DMatrix::zeros(1, 1)).unwrap(), 0.0);
        let v = local_l0(&local, &[0.7], &DMatrix::from_element(1, 1, 3.5)).unwrap();
        assert!((v - 3.5).abs() < 1e-14);
    }
}
