//! Monte-Carlo evaluation of the resolvent `u(x) = E^x int_0^inf e^{-t} f(X_t) dt`
//! for the Lévy-Itô process driven by the jump maps with a frozen gradient.
//!
//! Jumps smaller than a cutoff are dropped; their compensator is kept as a
//! deterministic drift `-int_{cutoff<|z|<1} j_1(p, z) dmu_1`.

use crate::error::{Error, Result};
use crate::grid::{Field, GridField};
use crate::jump_maps::{eval_sigma, JumpFamily, JumpMapSpec};
use crate::levy_measures::{JumpSampler, LevyMeasureSpec, Part};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Longest drift step between jumps when the drift depends on the state.
const DRIFT_STEP: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathConfig {
    pub small_jump_cutoff: f64,
    pub n_samples: usize,
    pub rng_seed: u64,
    #[serde(default = "default_horizon")]
    pub max_horizon: f64,
    /// Bound on `|D^2 u|` used to turn the dropped second moment into a bias bound.
    #[serde(default = "default_hessian_bound")]
    pub hessian_bound: f64,
}

fn default_horizon() -> f64 {
    40.0
}

fn default_hessian_bound() -> f64 {
    1.0
}

impl PathConfig {
    pub fn new(small_jump_cutoff: f64, n_samples: usize, rng_seed: u64) -> Self {
        Self {
            small_jump_cutoff,
            n_samples,
            rng_seed,
            max_horizon: default_horizon(),
            hessian_bound: default_hessian_bound(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.small_jump_cutoff > 0.0) {
            return Err(Error::invalid("small_jump_cutoff", "must be positive"));
        }
        if self.n_samples < 100 {
            return Err(Error::invalid("n_samples", "need at least 100 samples"));
        }
        if !(self.max_horizon > 0.0) {
            return Err(Error::invalid("max_horizon", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    /// Sample standard deviation over `sqrt(n_samples)`.
    pub std_error: f64,
    pub n_samples: usize,
    /// `1/2 int_{|z|<cutoff} |z|^2 dmu_1 C^2 |D^2 u|`, the bias from dropped jumps.
    pub bias_bound: f64,
}

/// Gradient fed to the jump maps along a path.
#[derive(Debug, Clone)]
pub enum FrozenGradient {
    Constant(Vec<f64>),
    /// Gradient components sampled on a grid; looked up at `P_R(state)`.
    Field(Vec<GridField>),
}

impl FrozenGradient {
    /// Central-difference gradient of a solved field.
    pub fn from_solution(u: &GridField) -> Self {
        let g = u.gradient_field();
        FrozenGradient::Field(
            (0..u.grid.dim)
                .map(|a| GridField {
                    grid: u.grid,
                    values: g.iter().map(|v| v[a]).collect(),
                })
                .collect(),
        )
    }

    fn at(&self, x: &[f64; 2], n: usize) -> [f64; 2] {
        match self {
            FrozenGradient::Constant(p) => [p[0], p.get(1).copied().unwrap_or(0.0)],
            FrozenGradient::Field(comps) => {
                let r = comps[0].grid.radius;
                let len = (x[0] * x[0] + x[1] * x[1]).sqrt();
                let y = if len > r { [x[0] * r / len, x[1] * r / len] } else { *x };
                let mut out = [0.0; 2];
                for (o, c) in out.iter_mut().zip(comps) {
                    *o = c.value(&y[..n]);
                }
                out
            }
        }
    }

    fn is_constant(&self) -> bool {
        matches!(self, FrozenGradient::Constant(_))
    }

    fn bound(&self) -> f64 {
        match self {
            FrozenGradient::Constant(p) => crate::numerics::norm(p),
            FrozenGradient::Field(c) => {
                let n = c[0].values.len();
                (0..n)
                    .map(|k| c.iter().map(|f| f.values[k] * f.values[k]).sum::<f64>().sqrt())
                    .fold(0.0, f64::max)
            }
        }
    }
}

/// Jump times and post-jump states of one path. `states[i]` holds on
/// `[times[i], times[i+1])`; drift is resolved by sub-steps.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSkeleton {
    pub times: Vec<f64>,
    pub states: Vec<[f64; 2]>,
}

impl PathSkeleton {
    pub fn final_state(&self) -> [f64; 2] {
        *self.states.last().expect("path has a start")
    }

    /// `int_0^T e^{-t} g(X_t) dt` for the piecewise-constant path up to its end.
    pub fn discounted_integral(&self, mut g: impl FnMut(&[f64; 2]) -> f64) -> f64 {
        let mut total = 0.0;
        for i in 0..self.times.len() - 1 {
            let (a, b) = (self.times[i], self.times[i + 1]);
            total += g(&self.states[i]) * ((-a).exp() - (-b).exp());
        }
        total
    }
}

/// Simulation ingredients shared by all paths.
struct Simulator<'a> {
    jump: &'a JumpMapSpec,
    grad: &'a FrozenGradient,
    sampler: JumpSampler,
    n: usize,
    m1: [f64; 2],
}

impl<'a> Simulator<'a> {
    fn new(jump: &'a JumpMapSpec, grad: &'a FrozenGradient, measure: &LevyMeasureSpec, cutoff: f64) -> Result<Self> {
        jump.validate()?;
        match jump.family {
            JumpFamily::ExponentialCompensator => {
                return Err(Error::invalid("family", "the exponential compensator has no path representation"))
            }
            JumpFamily::PLaplaceSplit if jump.p_exp > 2.0 => {
                return Err(Error::invalid("family", "split p-Laplacian paths are not simulated"))
            }
            _ => {}
        }
        if jump.dim_z() != measure.dim_z {
            return Err(Error::DimensionMismatch {
                expected: jump.dim_z(),
                got: measure.dim_z,
            });
        }
        if let FrozenGradient::Constant(p) = grad {
            if p.len() != jump.dim_x {
                return Err(Error::DimensionMismatch {
                    expected: jump.dim_x,
                    got: p.len(),
                });
            }
        }
        let sampler = JumpSampler::new(measure, cutoff)?;
        let m1 = sampler.first_moment_compensated;
        Ok(Self {
            jump,
            grad,
            sampler,
            n: jump.dim_x,
            m1,
        })
    }

    fn sigma(&self, x: &[f64; 2], part: Part) -> nalgebra::DMatrix<f64> {
        let p = self.grad.at(x, self.n);
        eval_sigma(self.jump, part, &p[..self.n]).expect("dimensions checked at construction")
    }

    fn apply(&self, s: &nalgebra::DMatrix<f64>, z: &[f64; 2]) -> [f64; 2] {
        let mut y = [0.0; 2];
        for (i, yi) in y.iter_mut().enumerate().take(s.nrows()) {
            *yi = (0..s.ncols()).map(|j| s[(i, j)] * z[j]).sum();
        }
        y
    }

    fn velocity(&self, x: &[f64; 2]) -> [f64; 2] {
        if self.m1 == [0.0, 0.0] {
            return [0.0; 2];
        }
        let v = self.apply(&self.sigma(x, Part::Compensated), &self.m1);
        [-v[0], -v[1]]
    }

    /// Drift from `t0` to `t1`, recording sub-step states.
    fn drift(&self, x: &mut [f64; 2], t0: f64, t1: f64, skel: &mut PathSkeleton) {
        if self.m1 == [0.0, 0.0] || t1 <= t0 {
            return;
        }
        if self.grad.is_constant() {
            let v = self.velocity(x);
            x[0] += v[0] * (t1 - t0);
            x[1] += v[1] * (t1 - t0);
            return;
        }
        let steps = ((t1 - t0) / DRIFT_STEP).ceil().max(1.0) as usize;
        let dt = (t1 - t0) / steps as f64;
        for s in 0..steps {
            let v = self.velocity(x);
            x[0] += v[0] * dt;
            x[1] += v[1] * dt;
            if s + 1 < steps {
                skel.times.push(t0 + (s + 1) as f64 * dt);
                skel.states.push(*x);
            }
        }
    }

    fn path<R: Rng>(&self, x0: [f64; 2], horizon: f64, rng: &mut R) -> PathSkeleton {
        let mut skel = PathSkeleton {
            times: vec![0.0],
            states: vec![x0],
        };
        let mut x = x0;
        let mut t = 0.0;
        let rate = self.sampler.rate();
        let arrivals = (rate > 0.0).then(|| Exp::new(rate).expect("positive rate"));
        loop {
            let next = arrivals.as_ref().map_or(f64::INFINITY, |e| t + e.sample(rng));
            if next >= horizon {
                self.drift(&mut x, t, horizon, &mut skel);
                skel.times.push(horizon);
                skel.states.push(x);
                return skel;
            }
            self.drift(&mut x, t, next, &mut skel);
            let (z, part) = self.sampler.sample(rng);
            let j = self.apply(&self.sigma(&x, part), &z);
            x[0] += j[0];
            x[1] += j[1];
            t = next;
            skel.times.push(t);
            skel.states.push(x);
        }
    }

    fn bias_bound(&self, hessian_bound: f64) -> f64 {
        let c = self.jump.linear_bound(self.grad.bound());
        0.5 * self.sampler.dropped_second_moment * c * c * hessian_bound
    }
}

fn rng_for(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn pad(x0: &[f64], n: usize) -> Result<[f64; 2]> {
    if x0.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: x0.len(),
        });
    }
    Ok([x0[0], x0.get(1).copied().unwrap_or(0.0)])
}

/// One path from `x0` on `[0, horizon]`.
pub fn simulate_path(
    x0: &[f64],
    grad: &FrozenGradient,
    jump: &JumpMapSpec,
    measure: &LevyMeasureSpec,
    horizon: f64,
    cfg: &PathConfig,
    seed: u64,
) -> Result<PathSkeleton> {
    if !(cfg.small_jump_cutoff > 0.0) {
        return Err(Error::invalid("small_jump_cutoff", "must be positive"));
    }
    if !(horizon >= 0.0) {
        return Err(Error::invalid("horizon", "must be nonnegative"));
    }
    let sim = Simulator::new(jump, grad, measure, cfg.small_jump_cutoff)?;
    let x = pad(x0, sim.n)?;
    Ok(sim.path(x, horizon, &mut rng_for(seed, 0)))
}

/// Mean and standard error accumulated in index order.
fn summarize(values: &[f64], bias_bound: f64) -> McEstimate {
    let (mut mean, mut m2) = (0.0, 0.0);
    for (k, v) in values.iter().enumerate() {
        let d = v - mean;
        mean += d / (k + 1) as f64;
        m2 += d * (v - mean);
    }
    let n = values.len();
    let var = if n > 1 { m2 / (n - 1) as f64 } else { 0.0 };
    McEstimate {
        mean,
        std_error: (var.max(0.0) / n as f64).sqrt(),
        n_samples: n,
        bias_bound,
    }
}

/// `E f(X_T)` with an independent killing time `T ~ Exp(1)`, truncated at
/// `cfg.max_horizon`. Sample `i` uses stream `i` of the seeded generator, so the
/// result does not depend on thread scheduling.
pub fn estimate_value<F: Field + ?Sized>(
    x0: &[f64],
    f: &F,
    grad: &FrozenGradient,
    jump: &JumpMapSpec,
    measure: &LevyMeasureSpec,
    cfg: &PathConfig,
) -> Result<McEstimate> {
    cfg.validate()?;
    let sim = Simulator::new(jump, grad, measure, cfg.small_jump_cutoff)?;
    let x = pad(x0, sim.n)?;
    let n = sim.n;
    let kill = Exp::new(1.0).expect("unit rate");
    let values: Vec<f64> = (0..cfg.n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_for(cfg.rng_seed, i);
            let t: f64 = kill.sample(&mut rng);
            let end = sim.path(x, t.min(cfg.max_horizon), &mut rng).final_state();
            f.value(&end[..n])
        })
        .collect();
    Ok(summarize(&values, sim.bias_bound(cfg.hessian_bound)))
}

/// `E int_0^H e^{-t} f(X_t) dt` by exact integration along the simulated paths
/// (plus the neglected tail `e^{-H} f(X_H)`), for checking the killing identity.
pub fn estimate_value_time_integral<F: Field + ?Sized>(
    x0: &[f64],
    f: &F,
    grad: &FrozenGradient,
    jump: &JumpMapSpec,
    measure: &LevyMeasureSpec,
    cfg: &PathConfig,
) -> Result<McEstimate> {
    cfg.validate()?;
    let sim = Simulator::new(jump, grad, measure, cfg.small_jump_cutoff)?;
    let x = pad(x0, sim.n)?;
    let n = sim.n;
    let h = cfg.max_horizon;
    let values: Vec<f64> = (0..cfg.n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_for(cfg.rng_seed, i);
            let path = sim.path(x, h, &mut rng);
            let tail = (-h).exp() * f.value(&path.final_state()[..n]);
            path.discounted_integral(|s| f.value(&s[..n])) + tail
        })
        .collect();
    Ok(summarize(&values, sim.bias_bound(cfg.hessian_bound)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McRow {
    pub x: Vec<f64>,
    pub pde_value: f64,
    pub mc: McEstimate,
    pub agree: bool,
}

/// Compare a PDE solution with Monte-Carlo estimates at `points`, freezing the
/// gradient of the solution in the jump maps. Agreement means
/// `|mc - pde| <= 3 std_error + margin`.
#[allow(clippy::too_many_arguments)]
pub fn mc_vs_pde_report(
    pde_solution: &GridField,
    rhs: &GridField,
    points: &[Vec<f64>],
    jump: &JumpMapSpec,
    measure: &LevyMeasureSpec,
    cfg: &PathConfig,
    margin: f64,
) -> Result<Vec<McRow>> {
    let grad = FrozenGradient::from_solution(pde_solution);
    points
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let mut c = *cfg;
            c.rng_seed = cfg.rng_seed.wrapping_add((i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
            let mc = estimate_value(x, rhs, &grad, jump, measure, &c)?;
            let pde_value = pde_solution.interpolate(x)?;
            let agree = (mc.mean - pde_value).abs() <= 3.0 * mc.std_error + margin;
            Ok(McRow {
                x: x.clone(),
                pde_value,
                mc,
                agree,
            })
        })
        .collect()
}

/// CSV with columns `x,pde_value,mc_mean,mc_stderr,agree_flag`; 2-D points are
/// written as space-separated coordinates.
pub fn write_mc_csv<W: Write>(rows: &[McRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "x,pde_value,mc_mean,mc_stderr,agree_flag")?;
    for r in rows {
        let x: Vec<String> = r.x.iter().map(|v| format!("{v}")).collect();
        writeln!(
            w,
            "{},{:.16e},{:.16e},{:.16e},{}",
            x.join(" "),
            r.pde_value,
            r.mc.mean,
            r.mc.std_error,
            r.agree
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::AnalyticField;

    #[test]
    fn constant_f_is_exact() {
        let jump = JumpMapSpec::new(JumpFamily::Identity, 1);
        let m = LevyMeasureSpec::fractional(1, 1.0);
        let f = AnalyticField::new(1, |_| 0.1);
        let est = estimate_value(&[0.3], &f, &FrozenGradient::Constant(vec![0.0]), &jump, &m, &PathConfig::new(0.1, 500, 3)).unwrap();
        assert_eq!(est.mean, 0.1);
        assert_eq!(est.std_error, 0.0);
    }

    #[test]
    fn empty_measure_path_is_constant() {
        let jump = JumpMapSpec::new(JumpFamily::Identity, 2);
        let m = LevyMeasureSpec::empty(2);
        let p = simulate_path(&[0.5, -0.25], &FrozenGradient::Constant(vec![0.0, 0.0]), &jump, &m, 5.0, &PathConfig::new(0.1, 100, 1), 9).unwrap();
        assert!(p.states.iter().all(|s| *s == [0.5, -0.25]));
    }

    #[test]
    fn too_few_samples_rejected() {
        assert!(PathConfig::new(0.1, 10, 0).validate().is_err());
        assert!(PathConfig::new(0.0, 1000, 0).validate().is_err());
    }
}
