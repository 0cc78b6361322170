use super::elliptic::Relaxation;
use super::{MarchParams, NonlinearitySpec, SolveReport};
use crate::error::{Error, Result};
use crate::grid::GridField;
use crate::jump_maps::{local_l0, LocalOperatorSpec};
use nalgebra::DMatrix;
use rayon::prelude::*;

fn top_eigenvalue(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    (a * a.transpose()).symmetric_eigenvalues().max()
}

/// Steady state of `u_t + F(u, L_0(Du_h, D^2_h u)) - eps Delta_h u = f` with
/// `u = 0` on the boundary, by pseudo-time marching with the second-order part
/// treated implicitly. `march.dt` overrides the pseudo-time step.
pub fn solve_local_reference(
    local: &LocalOperatorSpec,
    rhs: &GridField,
    nonlinearity: &NonlinearitySpec,
    march: &MarchParams,
    eps_visc: f64,
) -> Result<(GridField, SolveReport)> {
    nonlinearity.validate()?;
    local.jump.validate()?;
    let grid = rhs.grid;
    if grid.dim != local.jump.dim_x {
        return Err(Error::DimensionMismatch {
            expected: local.jump.dim_x,
            got: grid.dim,
        });
    }
    if !(eps_visc >= 0.0) {
        return Err(Error::invalid("eps_visc", "must be nonnegative"));
    }
    let h = grid.spacing();
    let grad_bound = 1.25 * (rhs.lipschitz_estimate() / nonlinearity.gamma).max(1e-3);
    let c = local.jump.linear_bound(grad_bound);
    let mut spread = top_eigenvalue(&local.a1) + top_eigenvalue(&local.a2);
    if local.split_factor != 0.0 {
        spread += (local.jump.p_exp - 2.0) * local.split_factor * local.split_factor;
    }
    let kappa = 0.5 * spread * c * c;
    let trunc_m = 1.0 + rhs.sup_norm() / nonlinearity.gamma;
    let phi_lip = nonlinearity.phi_lipschitz(trunc_m);
    let rate = nonlinearity.gamma + phi_lip * local.drift.norm() * c / h;
    let relax = Relaxation {
        rhs,
        nonlinearity,
        eps: eps_visc,
        kappa,
        phi_lip,
        tau: march.dt.unwrap_or((0.9 / rate).min(50.0)),
        tol: march.tol,
        max_iter: march.max_steps,
        trunc_m: f64::INFINITY,
    };
    let n = grid.dim;
    relax.run(grid.zeros(), |u| {
        let l: Vec<f64> = (0..grid.len())
            .into_par_iter()
            .map(|k| {
                if grid.is_boundary(k) {
                    return Ok(0.0);
                }
                let g = u.gradient_at(k);
                let hs = u.hessian_at(k);
                let x = DMatrix::from_fn(n, n, |i, j| hs[i][j]);
                local_l0(local, &g[..n], &x)
            })
            .collect::<Result<_>>()?;
        let m = crate::numerics::sup_norm(&l);
        Ok((l, m))
    })
}
