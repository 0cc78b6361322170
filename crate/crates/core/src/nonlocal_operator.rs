//! Evaluation of `L[u, p](x) = L_delta + L^delta + L_2` on grid or closed-form fields.
//!
//! The inner part `|z| < delta` of the compensated integral is replaced by the
//! second-order surrogate `1/2 tr[sigma^T H sigma M_2]` built from the stored
//! quadratic moments of `mu_1`. The outer parts are node sums; targets leaving the
//! computational box are projected back onto the inscribed ball (or clamped).

use crate::error::{Error, Result};
use crate::grid::{Field, GridField};
use crate::jump_maps::{eval_sigma, split_directional_sigma, JumpFamily, JumpMapSpec};
use crate::levy_measures::{build_quadrature, LevyMeasureSpec, MeasureFamily, Part, QuadratureRule};
use crate::numerics::sphere_area;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Treatment of jump targets outside the computational domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// `u(P_R(y))` with `P_R` the projection onto the ball inscribed in the box.
    #[default]
    ProjectToBall,
    /// Clamp each coordinate to the box.
    ExtrapolateConstant,
}

/// Source of the gradient fed to the jump maps by [`eval_l_field`].
#[derive(Debug, Clone, Copy)]
pub enum GradientSource<'a> {
    /// Central differences of `u` itself (one-sided at the boundary).
    SelfCentralDiff,
    /// A precomputed gradient per node.
    Frozen(&'a [[f64; 2]]),
}

/// `P_R(x)`: `x` if `|x| <= R`, otherwise `R x / |x|`.
pub fn project_ball(x: &[f64], r: f64) -> Vec<f64> {
    let n = crate::numerics::norm(x);
    if n <= r {
        x.to_vec()
    } else {
        x.iter().map(|v| v * r / n).collect()
    }
}

/// Operator data: jump family, measure pair and its discretization.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorConfig {
    pub jump: JumpMapSpec,
    pub measure: LevyMeasureSpec,
    pub rule: QuadratureRule,
    pub boundary: Boundary,
    /// One-dimensional rule driving the directional term of the split p-Laplacian.
    companion: Option<QuadratureRule>,
}

/// One-dimensional measure whose second moment matches the per-direction second
/// moment of `fam` on every shell.
fn companion_family(fam: &MeasureFamily, dim_z: usize) -> MeasureFamily {
    let s = sphere_area(dim_z) / (2.0 * dim_z as f64);
    match fam {
        MeasureFamily::Stable { alpha, c_alpha } => MeasureFamily::Stable {
            alpha: *alpha,
            c_alpha: c_alpha * s,
        },
        MeasureFamily::Tempered { .. } => fam.clone(),
        MeasureFamily::Concentrating { eps, g0, g_grad } => MeasureFamily::Concentrating {
            eps: *eps,
            g0: g0 * s,
            g_grad: vec![if dim_z == 1 { g_grad[0] } else { 0.0 }],
        },
        MeasureFamily::Truncated { base, inner_radius } => companion_family(base, dim_z).truncated(*inner_radius),
    }
}

impl OperatorConfig {
    pub fn new(
        jump: JumpMapSpec,
        measure: LevyMeasureSpec,
        delta: f64,
        resolution: usize,
        boundary: Boundary,
    ) -> Result<Self> {
        jump.validate()?;
        if jump.dim_z() != measure.dim_z {
            return Err(Error::DimensionMismatch {
                expected: jump.dim_z(),
                got: measure.dim_z,
            });
        }
        let rule = build_quadrature(&measure, delta, resolution)?;
        let companion = if matches!(jump.family, JumpFamily::PLaplaceSplit) && jump.p_exp > 2.0 {
            let c = LevyMeasureSpec::new(
                1,
                measure.compensated.as_ref().map(|f| companion_family(f, measure.dim_z)),
                measure.uncompensated.as_ref().map(|f| companion_family(f, measure.dim_z)),
            );
            Some(build_quadrature(&c, delta, resolution)?)
        } else {
            None
        };
        Ok(Self {
            jump,
            measure,
            rule,
            boundary,
            companion,
        })
    }

    pub fn delta(&self) -> f64 {
        self.rule.delta
    }

    pub fn dim(&self) -> usize {
        self.jump.dim_x
    }

    /// Largest jump length produced by the nodes for gradients with `|p| <= grad_bound`.
    pub fn max_reach(&self, grad_bound: f64) -> f64 {
        let mut reach = self.jump.linear_bound(grad_bound) * self.rule.max_radius();
        if let Some(c) = &self.companion {
            reach = reach.max(grad_bound.powf(0.5 * (self.jump.p_exp - 2.0)) * c.max_radius());
        }
        reach
    }

    /// Diffusion coefficient `kappa` dominating the inner surrogate for
    /// `|p| <= grad_bound`: `1/2 tr[sigma^T H sigma M_2] <= kappa tr H` for `H >= 0`.
    pub fn inner_diffusion(&self, grad_bound: f64) -> f64 {
        let m = &self.rule.quad_moment_inner;
        let lam = if self.rule.dim_z == 1 {
            m[0][0]
        } else {
            let (a, b, c) = (m[0][0], m[0][1], m[1][1]);
            0.5 * (a + c) + (0.25 * (a - c) * (a - c) + b * b).sqrt()
        };
        let c = self.jump.linear_bound(grad_bound);
        let mut kappa = 0.5 * lam * c * c;
        if let Some(comp) = &self.companion {
            let q = self.jump.p_exp;
            let cd = grad_bound.powf(0.5 * (q - 2.0));
            kappa += 0.5 * (q - 2.0) * comp.quad_moment_inner[0][0] * cd * cd;
        }
        kappa
    }

    /// Rate of the outer node sums and compensator drift for `|p| <= grad_bound`
    /// on a grid of spacing `h`, excluding the inner surrogate.
    pub fn outer_rate(&self, grad_bound: f64, h: f64) -> f64 {
        let c = self.jump.linear_bound(grad_bound);
        let mut rate = self.rule.outer_mass(Part::Compensated) + self.rule.outer_mass(Part::Uncompensated);
        let first: f64 = self
            .rule
            .outer_compensated
            .iter()
            .map(|n| n.weight * n.z[0])
            .sum::<f64>()
            .abs();
        rate += c * first / h;
        if self.jump.exponential_compensator() {
            rate += grad_bound * grad_bound * self.rule.exp_remainder_inner.abs() / h;
        }
        if let Some(comp) = &self.companion {
            rate += (self.jump.p_exp - 2.0) * (comp.outer_mass(Part::Compensated) + comp.outer_mass(Part::Uncompensated));
        }
        rate
    }

    /// Bound on the diagonal coefficient of the whole discrete operator (explicit
    /// stability rate).
    pub fn stability_rate(&self, grad_bound: f64, h: f64) -> f64 {
        self.outer_rate(grad_bound, h) + 2.0 * self.dim() as f64 * self.inner_diffusion(grad_bound) / (h * h)
    }
}

/// `sigma(p)` stored as a dense `N x P` block padded to 2x2.
#[derive(Debug, Clone, Copy)]
struct Sigma {
    m: [[f64; 2]; 2],
    n: usize,
    p: usize,
}

impl Sigma {
    fn from_matrix(s: &nalgebra::DMatrix<f64>) -> Self {
        let mut m = [[0.0; 2]; 2];
        for i in 0..s.nrows() {
            for j in 0..s.ncols() {
                m[i][j] = s[(i, j)];
            }
        }
        Self {
            m,
            n: s.nrows(),
            p: s.ncols(),
        }
    }

    fn apply(&self, z: &[f64; 2]) -> [f64; 2] {
        let mut y = [0.0; 2];
        for (i, yi) in y.iter_mut().enumerate().take(self.n) {
            *yi = (0..self.p).map(|j| self.m[i][j] * z[j]).sum();
        }
        y
    }

    /// `tr[sigma^T H sigma M]`.
    fn quadratic_trace(&self, h: &[[f64; 2]; 2], m: &[[f64; 2]; 2]) -> f64 {
        let mut total = 0.0;
        for a in 0..self.p {
            for b in 0..self.p {
                let mut s_hs = 0.0;
                for i in 0..self.n {
                    for j in 0..self.n {
                        s_hs += self.m[i][a] * h[i][j] * self.m[j][b];
                    }
                }
                total += s_hs * m[b][a];
            }
        }
        total
    }
}

fn dot(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

struct Evaluator<'a, F: Field + ?Sized> {
    u: &'a F,
    cfg: &'a OperatorConfig,
    radius: Option<f64>,
    n: usize,
}

impl<F: Field + ?Sized> Evaluator<'_, F> {
    fn value_at(&self, y: [f64; 2]) -> f64 {
        let mut y = y;
        if let (Some(r), Boundary::ProjectToBall) = (self.radius, self.cfg.boundary) {
            let len = (y[0] * y[0] + y[1] * y[1]).sqrt();
            if len > r {
                y = [y[0] * r / len, y[1] * r / len];
            }
        }
        self.u.value(&y[..self.n])
    }

    /// Inner surrogate plus outer node sums for a single linearization.
    #[allow(clippy::too_many_arguments)]
    fn sum_parts(
        &self,
        rule: &QuadratureRule,
        sigma: &Sigma,
        x: &[f64; 2],
        ux: f64,
        p: &[f64; 2],
        hess: &[[f64; 2]; 2],
        exp_comp: bool,
    ) -> f64 {
        let mut total = 0.5 * sigma.quadratic_trace(hess, &rule.quad_moment_inner);
        let p2 = dot(p, p);
        if exp_comp {
            total -= p2 * rule.exp_remainder_inner;
        }
        for node in &rule.outer_compensated {
            let j = sigma.apply(&node.z);
            let comp = if exp_comp { node.z[0].exp_m1() * p2 } else { dot(&j, p) };
            total += node.weight * (self.value_at([x[0] + j[0], x[1] + j[1]]) - ux - comp);
        }
        for node in &rule.outer_uncompensated {
            let j = sigma.apply(&node.z);
            total += node.weight * (self.value_at([x[0] + j[0], x[1] + j[1]]) - ux);
        }
        total
    }

    fn eval(&self, x: &[f64; 2], ux: f64, p: &[f64; 2], hess: &[[f64; 2]; 2]) -> Result<f64> {
        let cfg = self.cfg;
        let ps = &p[..self.n];
        let sigma = Sigma::from_matrix(&eval_sigma(&cfg.jump, Part::Compensated, ps)?);
        let mut total = self.sum_parts(&cfg.rule, &sigma, x, ux, p, hess, cfg.jump.exponential_compensator());
        if let Some(comp) = &cfg.companion {
            let d = Sigma::from_matrix(&split_directional_sigma(&cfg.jump, ps)?);
            total += (cfg.jump.p_exp - 2.0) * self.sum_parts(comp, &d, x, ux, p, hess, false);
        }
        Ok(total)
    }
}

fn pad(v: &[f64]) -> [f64; 2] {
    [v[0], v.get(1).copied().unwrap_or(0.0)]
}

fn pad_hess(h: &[Vec<f64>]) -> [[f64; 2]; 2] {
    let mut out = [[0.0; 2]; 2];
    for (i, row) in h.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            out[i][j] = *v;
        }
    }
    out
}

/// `L[u, grad](x)` with the caller's gradient and Hessian surrogates at `x`.
pub fn eval_l_at<F: Field + ?Sized>(
    u: &F,
    grad: &[f64],
    hess: &[Vec<f64>],
    x: &[f64],
    cfg: &OperatorConfig,
) -> Result<f64> {
    let n = cfg.dim();
    for len in [u.dim(), grad.len(), x.len(), hess.len()] {
        if len != n {
            return Err(Error::DimensionMismatch { expected: n, got: len });
        }
    }
    if hess.iter().any(|row| row.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: hess.iter().map(|r| r.len()).find(|&l| l != n).unwrap_or(0),
        });
    }
    if let Some(r) = u.domain_radius() {
        if x.iter().any(|v| v.abs() > r * (1.0 + 1e-12)) {
            return Err(Error::OutOfDomain(x.to_vec()));
        }
    }
    let ev = Evaluator {
        u,
        cfg,
        radius: u.domain_radius(),
        n,
    };
    let xp = pad(x);
    ev.eval(&xp, u.value(x), &pad(grad), &pad_hess(hess))
}

/// `L[u, Du]` at every node of `u`; the Hessian is always taken from `u`.
pub fn eval_l_field(u: &GridField, cfg: &OperatorConfig, grad_source: GradientSource<'_>) -> Result<GridField> {
    let g = u.grid;
    if g.dim != cfg.dim() {
        return Err(Error::DimensionMismatch {
            expected: cfg.dim(),
            got: g.dim,
        });
    }
    if let GradientSource::Frozen(gr) = grad_source {
        if gr.len() != g.len() {
            return Err(Error::DimensionMismatch {
                expected: g.len(),
                got: gr.len(),
            });
        }
    }
    let ev = Evaluator {
        u,
        cfg,
        radius: Some(g.radius),
        n: g.dim,
    };
    let values = (0..g.len())
        .into_par_iter()
        .map(|k| {
            let p = match grad_source {
                GradientSource::SelfCentralDiff => u.gradient_at(k),
                GradientSource::Frozen(gr) => gr[k],
            };
            ev.eval(&g.point(k), u.values[k], &p, &u.hessian_at(k))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(GridField { grid: g, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{AnalyticField, GridSpec};
    use crate::jump_maps::JumpFamily;

    #[test]
    fn projection_examples() {
        assert_eq!(project_ball(&[0.5, 0.0], 1.0), vec![0.5, 0.0]);
        let p = project_ball(&[3.0, 4.0], 1.0);
        assert!((p[0] - 0.6).abs() < 1e-15 && (p[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn constant_field_gives_zero() {
        let cfg = OperatorConfig::new(
            JumpMapSpec::new(JumpFamily::Curvature, 2),
            LevyMeasureSpec::fractional(2, 1.2),
            0.1,
            8,
            Boundary::ProjectToBall,
        )
        .unwrap();
        let g = GridSpec::new(2, 2.0, 11).unwrap();
        let u = g.sample(|_| 3.25);
        let l = eval_l_field(&u, &cfg, GradientSource::SelfCentralDiff).unwrap();
        assert!(l.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn outside_box_is_rejected() {
        let cfg = OperatorConfig::new(
            JumpMapSpec::new(JumpFamily::Identity, 1),
            LevyMeasureSpec::fractional(1, 1.0),
            0.1,
            8,
            Boundary::ProjectToBall,
        )
        .unwrap();
        let g = GridSpec::new(1, 1.0, 11).unwrap();
        let u = g.sample(|x| x[0]);
        assert!(matches!(
            eval_l_at(&u, &[1.0], &[vec![0.0]], &[1.5], &cfg),
            Err(Error::OutOfDomain(_))
        ));
        let a = AnalyticField::new(1, |x| x[0]);
        assert!(eval_l_at(&a, &[1.0], &[vec![0.0]], &[1.5], &cfg).unwrap().abs() < 1e-12);
    }
}
