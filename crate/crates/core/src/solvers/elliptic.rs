use super::linear::{laplacian, screened_solve};
use super::{NonlinearityForm, NonlinearitySpec, ProblemSpec, SolveReport};
use crate::error::{Error, Result};
use crate::grid::GridField;
use crate::nonlocal_operator::{eval_l_field, GradientSource};
use crate::numerics::{sup_diff, sup_norm};
use std::time::Instant;

/// `T_M[L[u, Du]]` at every node together with `max |L|`.
fn truncated_l(problem: &ProblemSpec, u: &GridField) -> Result<(Vec<f64>, f64)> {
    let l = eval_l_field(u, &problem.operator, GradientSource::SelfCentralDiff)?;
    let m = problem.trunc_m;
    let max_l = sup_norm(&l.values);
    Ok((l.values.into_iter().map(|v| v.clamp(-m, m)).collect(), max_l))
}

/// Sup norm over nodes where the equation is imposed.
fn interior_sup(u: &GridField, dirichlet: bool, v: impl Fn(usize) -> f64) -> f64 {
    (0..u.grid.len())
        .filter(|&k| !(dirichlet && u.grid.is_boundary(k)))
        .fold(0.0, |m, k| m.max(v(k).abs()))
}

/// Pseudo-time relaxation for `F(u, l) - eps Delta_h u = f` with `u = 0` on the
/// boundary. Each step solves
/// `(1 + tau gamma) u' - tau (eps + k) Delta_h u' = u + tau (f + phi(l(u)) - k Delta_h u)`
/// where `k` dominates the diffusion carried by `l`, so stiff second-order parts
/// are treated implicitly while the nonlocal sums stay explicit.
pub(crate) struct Relaxation<'a> {
    pub rhs: &'a GridField,
    pub nonlinearity: &'a NonlinearitySpec,
    pub eps: f64,
    pub kappa: f64,
    /// Lipschitz constant of `phi` over the range of `l`.
    pub phi_lip: f64,
    pub tau: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub trunc_m: f64,
}

impl Relaxation<'_> {
    pub(crate) fn run(
        &self,
        start: GridField,
        mut ell: impl FnMut(&GridField) -> Result<(Vec<f64>, f64)>,
    ) -> Result<(GridField, SolveReport)> {
        let t0 = Instant::now();
        let grid = self.rhs.grid;
        let f = &self.rhs.values;
        let nl = self.nonlinearity;
        let mut report = SolveReport::new(self.rhs, nl.gamma, self.tol, self.trunc_m);
        let k_impl = self.phi_lip * self.kappa;
        let mut tau = self.tau;
        let mut u = start;
        for k in 0..grid.len() {
            if grid.is_boundary(k) {
                u.values[k] = 0.0;
            }
        }
        let mut prev = f64::INFINITY;
        let mut increases = 0;
        for it in 0..=self.max_iter {
            let (tl, max_l) = ell(&u)?;
            let lap = laplacian(&grid, &u.values);
            let res = interior_sup(&u, true, |k| f[k] - nl.eval(u.values[k], tl[k]) + self.eps * lap[k]);
            if !res.is_finite() {
                return Err(Error::NoConvergence {
                    iterations: it,
                    last_update: res,
                });
            }
            report.residual_history.push(res);
            report.max_iterate_norm = report.max_iterate_norm.max(u.sup_norm());
            report.iterations = it;
            report.final_residual = res;
            report.max_abs_l = max_l;
            if res < self.tol {
                report.converged = true;
                break;
            }
            if it == self.max_iter {
                break;
            }
            if res > prev {
                increases += 1;
                if increases >= 2 {
                    tau *= 0.5;
                    increases = 0;
                }
            } else {
                increases = 0;
            }
            prev = res;
            let rhs = GridField {
                grid,
                values: (0..grid.len())
                    .map(|k| u.values[k] + tau * (f[k] + nl.phi(tl[k]) - k_impl * lap[k]))
                    .collect(),
            };
            u = screened_solve(&rhs, 1.0 + tau * nl.gamma, tau * (self.eps + k_impl))?;
        }
        report.step = tau;
        report.final_sup_norm = u.sup_norm();
        report.wall_time = t0.elapsed();
        Ok((u, report))
    }
}

/// Largest pseudo-time step tried by the relaxation.
const TAU_MAX: f64 = 50.0;

fn relaxation<'a>(problem: &'a ProblemSpec, tau: Option<f64>, tol: f64, max_iter: usize) -> Relaxation<'a> {
    let h = problem.rhs.grid.spacing();
    let g = problem.gradient_bound();
    let nl = &problem.nonlinearity;
    let phi_lip = nl.phi_lipschitz(problem.trunc_m);
    let rate = nl.gamma + phi_lip * problem.operator.outer_rate(g, h);
    Relaxation {
        rhs: &problem.rhs,
        nonlinearity: nl,
        eps: problem.eps_visc,
        kappa: problem.operator.inner_diffusion(g),
        phi_lip,
        tau: tau.unwrap_or((0.9 / rate).min(TAU_MAX)),
        tol,
        max_iter,
        trunc_m: problem.trunc_m,
    }
}

/// Fixed point of `u - eps Delta_h u = T_M[L[u, Du]] + f` with `u = 0` on the
/// boundary, starting from zero.
///
/// Each step is a damped update with `theta = tau / (1 + tau)`: the new iterate
/// solves `(1 + tau) u' - tau (eps + k) Delta_h u' = u + tau (T_M[L[u, Du]] - k Delta_h u + f)`,
/// with `k` the diffusion coefficient of the inner surrogate. The default `tau`
/// keeps `u + tau L^outer[u]` a convex combination of node values, so every
/// iterate obeys `|u| <= |f|` for linear monotone operators; it is halved after two
/// consecutive residual increases. Stops when the sup-norm residual of the
/// discrete equation drops below `tol`; an unconverged run returns the last
/// iterate with `converged = false`.
pub fn picard_solve_linear(problem: &ProblemSpec) -> Result<(GridField, SolveReport)> {
    problem.validate()?;
    if problem.nonlinearity.form != NonlinearityForm::LinearResolvent || problem.nonlinearity.gamma != 1.0 {
        return Err(Error::invalid("nonlinearity", "Picard iteration needs the linear resolvent form"));
    }
    let tau = problem.picard.damping.map(|theta| theta / (1.0 - theta));
    let relax = relaxation(problem, tau, problem.picard.tol, problem.picard.max_iter);
    let (u, mut report) = relax.run(problem.rhs.grid.zeros(), |u| truncated_l(problem, u))?;
    report.step = report.step / (1.0 + report.step);
    if problem.picard.uniqueness_check {
        let (v, other) = relax.run(problem.rhs.clone(), |u| truncated_l(problem, u))?;
        report.uniqueness_gap = Some(sup_diff(&u.values, &v.values));
        report.max_iterate_norm = report.max_iterate_norm.max(other.max_iterate_norm);
    }
    Ok((u, report))
}

/// Snapshots and final state of a time march.
#[derive(Debug, Clone, PartialEq)]
pub struct MarchOutput {
    pub snapshots: Vec<(f64, GridField)>,
    pub final_state: GridField,
    pub final_time: f64,
}

fn max_dt(problem: &ProblemSpec) -> f64 {
    let grid = problem.rhs.grid;
    let h = grid.spacing();
    let rate = problem.operator.stability_rate(problem.gradient_bound(), h);
    let nl = &problem.nonlinearity;
    let denom = nl.gamma
        + nl.phi_lipschitz(problem.trunc_m) * rate
        + 2.0 * grid.dim as f64 * problem.eps_visc / (h * h);
    0.9 / denom
}

enum Stop {
    At(f64),
    Steady,
}

fn march(problem: &ProblemSpec, stop: Stop) -> Result<(MarchOutput, SolveReport)> {
    problem.validate()?;
    let t0 = Instant::now();
    let grid = problem.rhs.grid;
    let f = &problem.rhs.values;
    let eps = problem.eps_visc;
    let dirichlet = eps > 0.0;
    let bound = max_dt(problem);
    let params = &problem.march;
    let mut dt = match params.dt {
        Some(dt) if dt > bound * (1.0 + 1e-12) => return Err(Error::CflViolation { dt, max_dt: bound }),
        Some(dt) if dt > 0.0 => dt,
        Some(dt) => return Err(Error::invalid("dt", format!("{dt} must be positive"))),
        None => bound,
    };
    let steps = match stop {
        Stop::At(t) => {
            if !(t >= 0.0) {
                return Err(Error::invalid("t_final", "must be nonnegative"));
            }
            let n = (t / dt).ceil().max(1.0) as usize;
            dt = t / n as f64;
            n
        }
        Stop::Steady => params.max_steps,
    };
    let tol = params.tol;
    let mut report = SolveReport::new(&problem.rhs, problem.nonlinearity.gamma, tol, problem.trunc_m);
    report.step = dt;
    let mut u = problem.u0.clone().unwrap_or_else(|| grid.zeros());
    if dirichlet {
        for k in 0..grid.len() {
            if grid.is_boundary(k) {
                u.values[k] = 0.0;
            }
        }
    }
    let limit_base = u.sup_norm();
    let f_norm = sup_norm(f);
    let mut snaps: Vec<f64> = params.snapshot_times.clone();
    snaps.sort_by(f64::total_cmp);
    let mut snap_iter = snaps.into_iter().peekable();
    let mut out = Vec::new();
    let mut t = 0.0;
    report.max_iterate_norm = u.sup_norm();
    while let Some(&ts) = snap_iter.peek() {
        if ts > 0.5 * dt {
            break;
        }
        out.push((ts, u.clone()));
        snap_iter.next();
    }
    for step in 0..steps {
        let (tl, max_l) = truncated_l(problem, &u)?;
        let lap = laplacian(&grid, &u.values);
        let rate: Vec<f64> = (0..grid.len())
            .map(|k| {
                if dirichlet && grid.is_boundary(k) {
                    0.0
                } else {
                    f[k] - problem.nonlinearity.eval(u.values[k], tl[k]) + eps * lap[k]
                }
            })
            .collect();
        let res = interior_sup(&u, dirichlet, |k| rate[k]);
        report.residual_history.push(res);
        report.final_residual = res;
        report.max_abs_l = max_l;
        report.iterations = step;
        if matches!(stop, Stop::Steady) && res < tol {
            report.converged = true;
            break;
        }
        for k in 0..grid.len() {
            u.values[k] += dt * rate[k];
        }
        t = (step + 1) as f64 * dt;
        let norm = u.sup_norm();
        report.max_iterate_norm = report.max_iterate_norm.max(norm);
        let limit = 10.0 * (limit_base + t * f_norm) + 1e-12;
        if !(norm <= limit) {
            return Err(Error::Blowup {
                time: t,
                sup_norm: norm,
                limit,
            });
        }
        while let Some(&ts) = snap_iter.peek() {
            if ts > t + 0.5 * dt {
                break;
            }
            out.push((ts, u.clone()));
            snap_iter.next();
        }
        report.iterations = step + 1;
    }
    if matches!(stop, Stop::At(_)) {
        report.converged = true;
    }
    report.final_sup_norm = u.sup_norm();
    report.wall_time = t0.elapsed();
    Ok((
        MarchOutput {
            snapshots: out,
            final_state: u,
            final_time: t,
        },
        report,
    ))
}

/// Explicit Euler for `u_t + F(u, Du, T_M[L[u, Du]]) - eps Delta_h u = f` up to
/// `march.t_final`. Refuses time steps beyond the stability bound
/// `dt (gamma + Lip(phi) rate + 2 N eps / h^2) <= 0.9`.
pub fn parabolic_march(problem: &ProblemSpec) -> Result<(MarchOutput, SolveReport)> {
    march(problem, Stop::At(problem.march.t_final))
}

/// Explicit Euler run of [`parabolic_march`] until `|u^{m+1} - u^m| / dt < march.tol`.
pub fn parabolic_steady_state(problem: &ProblemSpec) -> Result<(GridField, SolveReport)> {
    let (out, report) = march(problem, Stop::Steady)?;
    Ok((out.final_state, report))
}

/// Elliptic solve of `F(u, T_M[L[u, Du]]) - eps Delta_h u = f` as the steady state
/// of a pseudo-time flow, with the inner diffusion treated implicitly. Converged
/// when the sup-norm residual is below `march.tol`.
pub fn solve_fully_nonlinear(problem: &ProblemSpec) -> Result<(GridField, SolveReport)> {
    problem.validate()?;
    let relax = relaxation(problem, None, problem.march.tol, problem.march.max_steps);
    relax.run(
        problem.u0.clone().unwrap_or_else(|| problem.rhs.grid.zeros()),
        |u| truncated_l(problem, u),
    )
}
