//! Solvers for `u - L[u, Du] = f` and `F(u, Du, L[u, Du]) = f` on a bounded grid,
//! following the approximation scheme with truncation `T_M`, vanishing viscosity
//! and ball projection; plus the local limit problem and the limit sweep.

mod elliptic;
mod linear;
mod local;
mod sweep;

pub use elliptic::{parabolic_march, parabolic_steady_state, picard_solve_linear, solve_fully_nonlinear, MarchOutput};
pub use linear::{screened_solve, solve_screened_poisson};
pub use local::solve_local_reference;
pub use sweep::{
    comparison_harness, limit_sweep, solve_any, sweep_is_monotone, write_sweep_csv, ComparisonReport, SweepBase, SweepRow, SWEEP_SLACK,
};

use crate::error::{Error, Result};
use crate::grid::GridField;
use crate::nonlocal_operator::OperatorConfig;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::time::Duration;

/// Outer function `phi` in `F(u, l) = gamma u - phi(l)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum NonlinearityForm {
    /// `phi(l) = l`.
    LinearResolvent,
    /// `phi(l) = e^l - 1`.
    Exponential,
    /// Piecewise-linear nondecreasing `phi` through the `(l, phi)` knots, extended
    /// linearly beyond the first and last knot.
    Custom { table: Vec<(f64, f64)> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonlinearitySpec {
    #[serde(flatten)]
    pub form: NonlinearityForm,
    #[serde(default = "one")]
    pub gamma: f64,
}

fn one() -> f64 {
    1.0
}

impl NonlinearitySpec {
    pub fn linear() -> Self {
        Self {
            form: NonlinearityForm::LinearResolvent,
            gamma: 1.0,
        }
    }

    pub fn exponential() -> Self {
        Self {
            form: NonlinearityForm::Exponential,
            gamma: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::invalid("gamma", "must be positive"));
        }
        if let NonlinearityForm::Custom { table } = &self.form {
            if table.len() < 2 {
                return Err(Error::invalid("table", "need at least two knots"));
            }
            for w in table.windows(2) {
                if !(w[1].0 > w[0].0) {
                    return Err(Error::invalid("table", "knots must be strictly increasing in l"));
                }
                if w[1].1 < w[0].1 {
                    return Err(Error::invalid("table", "phi must be nondecreasing (F nonincreasing in l)"));
                }
            }
        }
        Ok(())
    }

    pub fn phi(&self, l: f64) -> f64 {
        match &self.form {
            NonlinearityForm::LinearResolvent => l,
            NonlinearityForm::Exponential => l.exp_m1(),
            NonlinearityForm::Custom { table } => {
                let k = table.partition_point(|(x, _)| *x <= l).clamp(1, table.len() - 1);
                let ((x0, y0), (x1, y1)) = (table[k - 1], table[k]);
                y0 + (y1 - y0) * (l - x0) / (x1 - x0)
            }
        }
    }

    /// Lipschitz constant of `phi` on `[-m, m]`.
    pub fn phi_lipschitz(&self, m: f64) -> f64 {
        match &self.form {
            NonlinearityForm::LinearResolvent => 1.0,
            NonlinearityForm::Exponential => m.exp(),
            NonlinearityForm::Custom { table } => table
                .windows(2)
                .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
                .fold(0.0, f64::max),
        }
    }

    /// `F(u, l) = gamma u - phi(l)`.
    pub fn eval(&self, u: f64, l: f64) -> f64 {
        self.gamma * u - self.phi(l)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PicardParams {
    /// Damping `theta`; `None` derives it from the operator's stability rate.
    pub damping: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
    /// Re-solve from `u0 = f` and report the gap between the two fixed points.
    pub uniqueness_check: bool,
}

impl Default for PicardParams {
    fn default() -> Self {
        Self {
            damping: None,
            tol: 1e-8,
            max_iter: 50_000,
            uniqueness_check: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarchParams {
    /// Time step; `None` uses 90% of the stability bound.
    pub dt: Option<f64>,
    pub t_final: f64,
    /// Times at which snapshots are stored.
    pub snapshot_times: Vec<f64>,
    /// Steady-state tolerance on `|u^{m+1} - u^m| / dt`.
    pub tol: f64,
    pub max_steps: usize,
}

impl Default for MarchParams {
    fn default() -> Self {
        Self {
            dt: None,
            t_final: 1.0,
            snapshot_times: Vec::new(),
            tol: 1e-8,
            max_steps: 2_000_000,
        }
    }
}

/// A nonlocal problem on the grid of `rhs`.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub rhs: GridField,
    pub nonlinearity: NonlinearitySpec,
    pub operator: OperatorConfig,
    pub trunc_m: f64,
    pub eps_visc: f64,
    pub picard: PicardParams,
    pub march: MarchParams,
    /// Initial datum of the parabolic problem (zero if absent).
    pub u0: Option<GridField>,
}

impl ProblemSpec {
    /// Linear resolvent problem with default truncation `|f| + 1` and viscosity `0.01`.
    pub fn new(rhs: GridField, operator: OperatorConfig) -> Self {
        let trunc_m = rhs.sup_norm() + 1.0;
        Self {
            rhs,
            nonlinearity: NonlinearitySpec::linear(),
            operator,
            trunc_m,
            eps_visc: 0.01,
            picard: PicardParams::default(),
            march: MarchParams::default(),
            u0: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.nonlinearity.validate()?;
        if self.rhs.grid.dim != self.operator.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.operator.dim(),
                got: self.rhs.grid.dim,
            });
        }
        if !(self.trunc_m > 0.0) {
            return Err(Error::invalid("trunc_m", "must be positive"));
        }
        if !(self.eps_visc >= 0.0 && self.eps_visc.is_finite()) {
            return Err(Error::invalid("eps_visc", "must be nonnegative"));
        }
        if !(self.picard.tol > 0.0) || !(self.march.tol > 0.0) {
            return Err(Error::invalid("tol", "must be positive"));
        }
        if let Some(t) = self.picard.damping {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::invalid("damping", "must lie in (0,1)"));
            }
        }
        if let Some(u0) = &self.u0 {
            if u0.grid != self.rhs.grid {
                return Err(Error::invalid("u0", "must live on the grid of the right-hand side"));
            }
        }
        Ok(())
    }

    /// Gradient scale used for stability bounds: the larger of the initial
    /// datum's Lipschitz constant and `Lip(f) / gamma`, with a 25% margin.
    pub(crate) fn gradient_bound(&self) -> f64 {
        let lf = self.rhs.lipschitz_estimate() / self.nonlinearity.gamma;
        let l0 = self.u0.as_ref().map_or(0.0, |u| u.lipschitz_estimate());
        1.25 * lf.max(l0).max(1e-3)
    }
}

/// Outcome and diagnostics of a solve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub converged: bool,
    pub iterations: usize,
    /// Sup norm of the discrete residual per iteration (or per step).
    pub residual_history: Vec<f64>,
    pub final_residual: f64,
    pub final_sup_norm: f64,
    pub rhs_sup_norm: f64,
    pub gamma: f64,
    pub tol: f64,
    /// Final damping (Picard) or time step (marching).
    pub step: f64,
    /// Largest sup norm over all iterates.
    pub max_iterate_norm: f64,
    pub max_abs_l: f64,
    pub trunc_m: f64,
    /// `|u - u'|` between the fixed points from two starts, when run.
    pub uniqueness_gap: Option<f64>,
    #[serde(skip)]
    pub wall_time: Duration,
}

impl SolveReport {
    pub(crate) fn new(rhs: &GridField, gamma: f64, tol: f64, trunc_m: f64) -> Self {
        Self {
            converged: false,
            iterations: 0,
            residual_history: Vec::new(),
            final_residual: f64::INFINITY,
            final_sup_norm: 0.0,
            rhs_sup_norm: rhs.sup_norm(),
            gamma,
            tol,
            step: 0.0,
            max_iterate_norm: 0.0,
            max_abs_l: 0.0,
            trunc_m,
            uniqueness_gap: None,
            wall_time: Duration::ZERO,
        }
    }

    /// `|u| <= |f| / gamma + 10 tol`.
    pub fn max_principle_pass(&self) -> bool {
        self.final_sup_norm <= self.rhs_sup_norm / self.gamma + 10.0 * self.tol
    }

    /// The bound holds for every iterate, not only the limit.
    pub fn iterate_bound_pass(&self) -> bool {
        self.max_iterate_norm <= self.rhs_sup_norm / self.gamma + 10.0 * self.tol
    }

    /// `T_M` acts as the identity on the final L-field.
    pub fn truncation_inactive(&self) -> bool {
        self.max_abs_l < self.trunc_m
    }

    pub fn uniqueness_pass(&self) -> bool {
        self.uniqueness_gap.is_none_or(|g| g <= 10.0 * self.tol)
    }

    /// `key: value` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "converged: {}", self.converged);
        let _ = writeln!(s, "iterations: {}", self.iterations);
        let _ = writeln!(s, "final_residual: {:e}", self.final_residual);
        let _ = writeln!(s, "final_sup_norm: {:.16e}", self.final_sup_norm);
        let _ = writeln!(s, "rhs_sup_norm: {:.16e}", self.rhs_sup_norm);
        let _ = writeln!(s, "gamma: {}", self.gamma);
        let _ = writeln!(s, "tol: {:e}", self.tol);
        let _ = writeln!(s, "step: {:e}", self.step);
        let _ = writeln!(s, "max_iterate_norm: {:.16e}", self.max_iterate_norm);
        let _ = writeln!(s, "max_abs_l: {:e}", self.max_abs_l);
        let _ = writeln!(s, "trunc_m: {}", self.trunc_m);
        let _ = writeln!(s, "max_principle_pass: {}", self.max_principle_pass());
        let _ = writeln!(s, "iterate_bound_pass: {}", self.iterate_bound_pass());
        let _ = writeln!(s, "truncation_inactive: {}", self.truncation_inactive());
        match self.uniqueness_gap {
            Some(g) => {
                let _ = writeln!(s, "uniqueness_gap: {g:e}");
            }
            None => s.push_str("uniqueness_gap: not_run\n"),
        }
        let _ = writeln!(s, "wall_time: {:.3}", self.wall_time.as_secs_f64());
        let hist: Vec<String> = self.residual_history.iter().map(|r| format!("{r:e}")).collect();
        let _ = writeln!(s, "residual_history: {}", hist.join(","));
        s
    }
}
