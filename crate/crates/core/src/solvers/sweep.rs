use super::{
    picard_solve_linear, solve_fully_nonlinear, solve_local_reference, MarchParams, NonlinearityForm,
    NonlinearitySpec, PicardParams, ProblemSpec, SolveReport,
};
use crate::error::{Error, Result};
use crate::grid::GridField;
use crate::jump_maps::{JumpMapSpec, LocalOperatorSpec};
use crate::levy_measures::LevyMeasureSpec;
use crate::nonlocal_operator::{Boundary, OperatorConfig};
use serde::Serialize;
use std::io::Write;

/// Allowed relative increase between consecutive sweep errors.
pub const SWEEP_SLACK: f64 = 1.1;

/// Everything but the measure of a sweep problem.
#[derive(Debug, Clone)]
pub struct SweepBase {
    pub rhs: GridField,
    pub jump: JumpMapSpec,
    pub delta: f64,
    pub resolution: usize,
    pub boundary: Boundary,
    pub nonlinearity: NonlinearitySpec,
    pub eps_visc: f64,
    pub picard: PicardParams,
    pub march: MarchParams,
}

impl SweepBase {
    pub fn new(rhs: GridField, jump: JumpMapSpec) -> Self {
        let h = rhs.grid.spacing();
        Self {
            rhs,
            jump,
            delta: h.max(0.05),
            resolution: 32,
            boundary: Boundary::ProjectToBall,
            nonlinearity: NonlinearitySpec::linear(),
            eps_visc: 0.01,
            picard: PicardParams::default(),
            march: MarchParams::default(),
        }
    }

    /// Problem with the given measure pair.
    pub fn problem(&self, measure: LevyMeasureSpec) -> Result<ProblemSpec> {
        let op = OperatorConfig::new(self.jump.clone(), measure, self.delta, self.resolution, self.boundary)?;
        let mut p = ProblemSpec::new(self.rhs.clone(), op);
        p.nonlinearity = self.nonlinearity.clone();
        p.eps_visc = self.eps_visc;
        p.picard = self.picard;
        p.march = self.march.clone();
        p.trunc_m = self.rhs.sup_norm() / self.nonlinearity.gamma + 1.0;
        Ok(p)
    }
}

/// Solve with Picard for the linear resolvent form, by marching otherwise.
pub fn solve_any(problem: &ProblemSpec) -> Result<(GridField, SolveReport)> {
    if problem.nonlinearity.form == NonlinearityForm::LinearResolvent && problem.nonlinearity.gamma == 1.0 {
        picard_solve_linear(problem)
    } else {
        solve_fully_nonlinear(problem)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub eps: f64,
    pub core_sup_error: f64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Set when the row's solve failed.
    pub error: Option<String>,
}

/// Solve with `fractional`-normalized stable measures for each `alpha` and
/// measure the core error against the local reference solution. Returns the
/// rows and the reference field.
pub fn limit_sweep(base: &SweepBase, alphas: &[f64], local: &LocalOperatorSpec) -> Result<(Vec<SweepRow>, GridField)> {
    if alphas.is_empty() {
        return Err(Error::invalid("alpha_list", "empty"));
    }
    if alphas.iter().any(|a| !(*a > 0.0 && *a < 2.0)) {
        return Err(Error::invalid("alpha_list", "entries must lie in (0,2)"));
    }
    if alphas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("alpha_list", "must be strictly increasing"));
    }
    let (reference, _) = solve_local_reference(local, &base.rhs, &base.nonlinearity, &base.march, base.eps_visc)?;
    let grid = base.rhs.grid;
    let rows = alphas
        .iter()
        .map(|&alpha| {
            let solved = base
                .problem(LevyMeasureSpec::fractional(base.jump.dim_z(), alpha))
                .and_then(|p| solve_any(&p));
            match solved {
                Ok((u, rep)) => SweepRow {
                    alpha,
                    eps: 2.0 - alpha,
                    core_sup_error: grid.core_sup_diff(&u.values, &reference.values),
                    residual: rep.final_residual,
                    iterations: rep.iterations,
                    converged: rep.converged,
                    error: None,
                },
                Err(e) => SweepRow {
                    alpha,
                    eps: 2.0 - alpha,
                    core_sup_error: f64::NAN,
                    residual: f64::NAN,
                    iterations: 0,
                    converged: false,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    Ok((rows, reference))
}

/// Error column nonincreasing within [`SWEEP_SLACK`] and every row converged.
pub fn sweep_is_monotone(rows: &[SweepRow]) -> bool {
    rows.iter().all(|r| r.converged && r.core_sup_error.is_finite())
        && rows
            .windows(2)
            .all(|w| w[1].core_sup_error <= SWEEP_SLACK * w[0].core_sup_error)
}

/// CSV with columns `alpha,eps,core_sup_error,residual,iterations`.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "alpha,eps,core_sup_error,residual,iterations")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{:.16e},{:.16e},{}",
            r.alpha, r.eps, r.core_sup_error, r.residual, r.iterations
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    /// `max (u_low - u_high)` over all nodes.
    pub violation: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// `(shift in grid steps, omega_u, omega_f / gamma)` for the low solution.
    pub modulus: Vec<(usize, f64, f64)>,
    pub low_report: SolveReport,
    pub high_report: SolveReport,
}

/// Largest difference of nodes `shift` steps apart along any axis.
fn modulus(u: &GridField, shift: usize) -> f64 {
    let g = &u.grid;
    let mut m: f64 = 0.0;
    for k in 0..g.len() {
        let idx = g.multi_index(k);
        for axis in 0..g.dim {
            if idx[axis] + shift < g.n {
                let mut j = idx;
                j[axis] += shift;
                m = m.max((u.values[g.flat_index(j)] - u.values[k]).abs());
            }
        }
    }
    m
}

/// Solve `problem` with the two ordered right-hand sides and report the ordering
/// violation of the solutions.
pub fn comparison_harness(
    problem: &ProblemSpec,
    f_low: &GridField,
    f_high: &GridField,
    tolerance: f64,
) -> Result<ComparisonReport> {
    if f_low.grid != f_high.grid || f_low.grid != problem.rhs.grid {
        return Err(Error::invalid("rhs", "data must share the problem grid"));
    }
    if f_low.values.iter().zip(&f_high.values).any(|(a, b)| a > b) {
        return Err(Error::invalid("rhs", "f_low must not exceed f_high"));
    }
    let with_rhs = |f: &GridField| {
        let mut p = problem.clone();
        p.rhs = f.clone();
        p.trunc_m = problem.trunc_m.max(f.sup_norm() / problem.nonlinearity.gamma + 1.0);
        p
    };
    let (u_low, low_report) = solve_any(&with_rhs(f_low))?;
    let (u_high, high_report) = solve_any(&with_rhs(f_high))?;
    let violation = u_low
        .values
        .iter()
        .zip(&u_high.values)
        .fold(f64::NEG_INFINITY, |m, (a, b)| m.max(a - b));
    let gamma = problem.nonlinearity.gamma;
    let modulus = [1, 2, 4]
        .into_iter()
        .map(|s| (s, modulus(&u_low, s), modulus(f_low, s) / gamma))
        .collect();
    Ok(ComparisonReport {
        violation,
        tolerance,
        pass: violation <= tolerance,
        modulus,
        low_report,
        high_report,
    })
}
