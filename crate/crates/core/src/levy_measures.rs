//! Lévy measure pairs, their quadrature rules, moment diagnostics and
//! compound-Poisson sampling.
//!
//! A [`LevyMeasureSpec`] describes two measures: the compensated part `mu_1`
//! (supported in `|z| < 1`, possibly singular at the origin with a finite
//! second moment) and the uncompensated part `mu_2` (finite mass). Every family
//! has a density of the form `w(theta, r) * r^(-P - kappa)` in polar coordinates,
//! where `w` is smooth and monotone in `r` and `kappa` is the order of the
//! singularity at the origin.

use crate::error::{Error, Result};
use crate::numerics::{self, directions, gauss_legendre, log_shells, map_rule, sphere_area};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

/// Relative mass of `mu_2` allowed beyond the radial cutoff.
pub const TAIL_TOLERANCE: f64 = 1e-8;

/// Number of dyadic panels used for the substituted inner integrals.
const INNER_PANELS: usize = 48;

/// Which of the two measures (and jump maps) a quantity belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Part {
    /// `mu_1`, integrated against the compensated increment.
    Compensated,
    /// `mu_2`, integrated against the plain increment.
    Uncompensated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeasureFamily {
    /// `c_alpha / |z|^(P + alpha)`.
    Stable { alpha: f64, c_alpha: f64 },
    /// One-dimensional CGMY density `c e^(-m z+ - g z-) / |z|^(1 + y)`.
    Tempered { c: f64, g: f64, m: f64, y: f64 },
    /// The base density restricted to `|z| > inner_radius`.
    Truncated {
        base: Box<MeasureFamily>,
        inner_radius: f64,
    },
    /// `eps * (g0 + g_grad . z) / |z|^(P + 2 - eps)` on `|z| < 1`.
    Concentrating { eps: f64, g0: f64, g_grad: Vec<f64> },
}

impl MeasureFamily {
    pub fn stable(alpha: f64, c_alpha: f64) -> Self {
        MeasureFamily::Stable { alpha, c_alpha }
    }

    pub fn truncated(self, inner_radius: f64) -> Self {
        MeasureFamily::Truncated {
            base: Box::new(self),
            inner_radius,
        }
    }

    fn base(&self) -> &MeasureFamily {
        match self {
            MeasureFamily::Truncated { base, .. } => base,
            other => other,
        }
    }

    /// Order of the singularity at the origin.
    pub fn kappa(&self) -> f64 {
        match self.base() {
            MeasureFamily::Stable { alpha, .. } => *alpha,
            MeasureFamily::Tempered { y, .. } => *y,
            MeasureFamily::Concentrating { eps, .. } => 2.0 - eps,
            MeasureFamily::Truncated { .. } => unreachable!("nested truncation rejected by validate"),
        }
    }

    /// Smooth angular/radial factor `w(theta, r)` of the density.
    pub fn profile(&self, theta: &[f64; 2], r: f64) -> f64 {
        match self.base() {
            MeasureFamily::Stable { c_alpha, .. } => *c_alpha,
            MeasureFamily::Tempered { c, g, m, .. } => {
                if theta[0] > 0.0 {
                    c * (-m * r).exp()
                } else {
                    c * (-g * r).exp()
                }
            }
            MeasureFamily::Concentrating { eps, g0, g_grad } => {
                let slope: f64 = g_grad.iter().zip(theta).map(|(g, t)| g * t).sum();
                eps * (g0 + r * slope)
            }
            MeasureFamily::Truncated { .. } => unreachable!(),
        }
    }

    /// Radial support `(lo, hi)` of the family when used for `part`.
    pub fn support(&self, part: Part) -> (f64, f64) {
        let natural_hi = |fam: &MeasureFamily| match fam {
            MeasureFamily::Concentrating { .. } => 1.0,
            _ => f64::INFINITY,
        };
        match (self, part) {
            (MeasureFamily::Truncated { inner_radius, .. }, Part::Compensated) => (*inner_radius, 1.0),
            (MeasureFamily::Truncated { base, inner_radius }, Part::Uncompensated) => {
                (*inner_radius, natural_hi(base))
            }
            (_, Part::Compensated) => (0.0, 1.0),
            (MeasureFamily::Concentrating { .. }, Part::Uncompensated) => (0.0, 1.0),
            (_, Part::Uncompensated) => (1.0, f64::INFINITY),
        }
    }

    fn validate(&self, dim_z: usize) -> Result<()> {
        match self {
            MeasureFamily::Stable { alpha, c_alpha } => {
                if !(*alpha > 0.0 && *alpha < 2.0) {
                    return Err(Error::invalid("alpha", format!("{alpha} not in (0,2)")));
                }
                if !(*c_alpha > 0.0 && c_alpha.is_finite()) {
                    return Err(Error::invalid("c_alpha", "must be positive"));
                }
            }
            MeasureFamily::Tempered { c, g, m, y } => {
                if dim_z != 1 {
                    return Err(Error::invalid("family", "tempered measures are one-dimensional"));
                }
                if !(*y > 0.0 && *y < 2.0) {
                    return Err(Error::invalid("y", format!("{y} not in (0,2)")));
                }
                for (name, v) in [("c", c), ("g", g), ("m", m)] {
                    if !(*v > 0.0 && v.is_finite()) {
                        return Err(Error::invalid(name, "must be positive"));
                    }
                }
            }
            MeasureFamily::Concentrating { eps, g0, g_grad } => {
                if !(*eps > 0.0 && *eps < 2.0) {
                    return Err(Error::invalid("eps", format!("{eps} not in (0,2)")));
                }
                if g_grad.len() != dim_z {
                    return Err(Error::DimensionMismatch {
                        expected: dim_z,
                        got: g_grad.len(),
                    });
                }
                if *g0 < numerics::norm(g_grad) || *g0 <= 0.0 {
                    return Err(Error::invalid("g0", "density must stay nonnegative on |z| < 1"));
                }
            }
            MeasureFamily::Truncated { base, inner_radius } => {
                if matches!(**base, MeasureFamily::Truncated { .. }) {
                    return Err(Error::invalid("base_family", "nested truncation"));
                }
                if !(*inner_radius > 0.0 && inner_radius.is_finite()) {
                    return Err(Error::invalid("inner_radius", "must be positive"));
                }
                base.validate(dim_z)?;
            }
        }
        Ok(())
    }
}

/// A pair `(mu_1, mu_2)` of Lévy measures on `R^P`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevyMeasureSpec {
    pub dim_z: usize,
    pub compensated: Option<MeasureFamily>,
    pub uncompensated: Option<MeasureFamily>,
    /// Angular trapezoid points in two dimensions.
    #[serde(default = "default_n_theta")]
    pub n_theta: usize,
}

fn default_n_theta() -> usize {
    16
}

impl LevyMeasureSpec {
    pub fn new(dim_z: usize, compensated: Option<MeasureFamily>, uncompensated: Option<MeasureFamily>) -> Self {
        Self {
            dim_z,
            compensated,
            uncompensated,
            n_theta: default_n_theta(),
        }
    }

    /// Full symmetric stable measure split at `|z| = 1`.
    pub fn stable(dim_z: usize, alpha: f64, c_alpha: f64) -> Self {
        let fam = MeasureFamily::stable(alpha, c_alpha);
        Self::new(dim_z, Some(fam.clone()), Some(fam))
    }

    /// Stable measure normalized so the operator is `-(-Delta)^(alpha/2)`.
    pub fn fractional(dim_z: usize, alpha: f64) -> Self {
        Self::stable(dim_z, alpha, numerics::fractional_constant(dim_z, alpha))
    }

    pub fn empty(dim_z: usize) -> Self {
        Self::new(dim_z, None, None)
    }

    pub fn family(&self, part: Part) -> Option<&MeasureFamily> {
        match part {
            Part::Compensated => self.compensated.as_ref(),
            Part::Uncompensated => self.uncompensated.as_ref(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.dim_z) {
            return Err(Error::UnsupportedDimension(self.dim_z));
        }
        if self.dim_z == 2 && (self.n_theta < 4 || self.n_theta % 2 == 1) {
            return Err(Error::invalid("n_theta", "need an even count of at least 4 angular points"));
        }
        for part in [Part::Compensated, Part::Uncompensated] {
            if let Some(f) = self.family(part) {
                f.validate(self.dim_z)?;
                let (lo, hi) = f.support(part);
                if part == Part::Uncompensated && lo == 0.0 {
                    return Err(Error::invalid(
                        "uncompensated",
                        "mu_2 must have finite mass; truncate the family",
                    ));
                }
                if lo >= hi {
                    // Empty support is allowed (e.g. truncation beyond the base support).
                    continue;
                }
            }
        }
        Ok(())
    }

    /// Effective radial support of a part, `None` if absent or empty.
    pub fn effective_support(&self, part: Part) -> Option<(f64, f64)> {
        let fam = self.family(part)?;
        let (lo, mut hi) = fam.support(part);
        if hi.is_infinite() {
            hi = self.z_max(part);
        }
        (lo < hi).then_some((lo, hi))
    }

    /// Radial cutoff for a part: the support end, or the radius beyond which the
    /// neglected mass is below [`TAIL_TOLERANCE`] relative to the total.
    pub fn z_max(&self, part: Part) -> f64 {
        let Some(fam) = self.family(part) else { return 0.0 };
        let (lo, hi) = fam.support(part);
        if hi.is_finite() {
            return hi;
        }
        let lo = lo.max(f64::MIN_POSITIVE);
        match fam.base() {
            MeasureFamily::Stable { alpha, .. } => lo * (1.0 / TAIL_TOLERANCE).powf(1.0 / alpha),
            MeasureFamily::Tempered { .. } => {
                let total = self.radial_mass(fam, part, lo, lo * 64.0);
                let mut z = 2.0 * lo;
                while self.tail_bound(fam, z) > TAIL_TOLERANCE * total && z < 1e6 {
                    z *= 1.25;
                }
                z
            }
            _ => hi,
        }
    }

    /// Upper bound on the mass beyond radius `z` for unbounded supports.
    fn tail_bound(&self, fam: &MeasureFamily, z: f64) -> f64 {
        match fam.base() {
            MeasureFamily::Stable { alpha, c_alpha } => sphere_area(self.dim_z) * c_alpha * z.powf(-alpha) / alpha,
            MeasureFamily::Tempered { c, g, m, y } => {
                let rate_m = c * (-m * z).exp() * z.powf(-1.0 - y) / m;
                let rate_g = c * (-g * z).exp() * z.powf(-1.0 - y) / g;
                rate_m + rate_g
            }
            _ => 0.0,
        }
    }

    fn radial_mass(&self, fam: &MeasureFamily, part: Part, a: f64, b: f64) -> f64 {
        let rule = gauss_legendre(8);
        shell_nodes(fam, self.dim_z, self.n_theta, &rule, a, b, part)
            .iter()
            .map(|n| n.weight)
            .sum()
    }
}

/// One outer quadrature node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureNode {
    /// Jump variable; the second component is zero when `P = 1`.
    pub z: [f64; 2],
    /// Unit direction of `z`.
    pub theta: [f64; 2],
    pub radius: f64,
    pub weight: f64,
}

/// Discretization of a measure pair split at radius `delta`.
///
/// The region `|z| < delta` carries no nodes: only the moment integrals needed by
/// the second-order surrogate of the compensated increment are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub dim_z: usize,
    pub delta: f64,
    pub resolution: usize,
    /// `mu_1` on `delta <= |z| < 1`.
    pub outer_compensated: Vec<QuadratureNode>,
    /// `mu_2` on its support, cut at `z_max`.
    pub outer_uncompensated: Vec<QuadratureNode>,
    /// `int_{|z|<delta} |z|^2 dmu_1`.
    pub second_moment_inner: f64,
    /// `int_{|z|<delta} z z^T dmu_1` (row-major, padded to 2x2).
    pub quad_moment_inner: [[f64; 2]; 2],
    /// `int_{|z|<delta} (e^z - 1 - z) dmu_1` for one-dimensional jumps.
    pub exp_remainder_inner: f64,
    pub z_max: f64,
    /// Estimated `mu_2` mass neglected beyond `z_max`.
    pub tail_mass: f64,
}

impl QuadratureRule {
    pub fn outer_nodes(&self, part: Part) -> &[QuadratureNode] {
        match part {
            Part::Compensated => &self.outer_compensated,
            Part::Uncompensated => &self.outer_uncompensated,
        }
    }

    pub fn outer_mass(&self, part: Part) -> f64 {
        self.outer_nodes(part).iter().map(|n| n.weight).sum()
    }

    pub fn node_count(&self) -> usize {
        self.outer_compensated.len() + self.outer_uncompensated.len()
    }

    /// Largest jump length carried by the nodes.
    pub fn max_radius(&self) -> f64 {
        self.outer_compensated
            .iter()
            .chain(&self.outer_uncompensated)
            .fold(0.0, |m, n| m.max(n.radius))
    }
}

/// Quadrature nodes for `fam` on the shell range `[a, b]` (`a > 0`), using the
/// Gauss-Legendre rule `rule` in the logarithmic radius.
fn shell_nodes(
    fam: &MeasureFamily,
    dim_z: usize,
    n_theta: usize,
    rule: &[(f64, f64)],
    a: f64,
    b: f64,
    _part: Part,
) -> Vec<QuadratureNode> {
    let kappa = fam.kappa();
    let dirs = directions(dim_z, n_theta);
    let mut nodes = Vec::new();
    for (lo, hi) in log_shells(a, b) {
        for (t, wt) in map_rule(rule, lo.ln(), hi.ln()) {
            let r = t.exp();
            // dmu = w r^(-1-kappa) dr dtheta = w r^(-kappa) dt dtheta
            let radial = wt * r.powf(-kappa);
            for (theta, wa) in &dirs {
                let w = fam.profile(theta, r) * radial * wa;
                nodes.push(QuadratureNode {
                    z: [r * theta[0], r * theta[1]],
                    theta: *theta,
                    radius: r,
                    weight: w,
                });
            }
        }
    }
    nodes
}

/// Point of the inner rule: `sum base * w(theta, r) * psi(z)` approximates
/// `int psi(z) |z|^2 dmu` over `lo < |z| < b`.
#[derive(Debug, Clone, Copy)]
struct InnerPoint {
    z: [f64; 2],
    theta: [f64; 2],
    radius: f64,
    base: f64,
}

/// For `lo = 0` the substitution `t = r^(2 - kappa)` removes the singularity:
/// `int_0^b psi w r^(1-kappa) dr = (1/(2-kappa)) int_0^{b^(2-kappa)} psi w dt`.
fn inner_points(kappa: f64, dim_z: usize, n_theta: usize, lo: f64, b: f64) -> Vec<InnerPoint> {
    let rule = gauss_legendre(8);
    let dirs = directions(dim_z, n_theta);
    let mut pts = Vec::new();
    let mut push = |r: f64, base: f64| {
        for (theta, wa) in &dirs {
            pts.push(InnerPoint {
                z: [r * theta[0], r * theta[1]],
                theta: *theta,
                radius: r,
                base: base * wa,
            });
        }
    };
    if lo > 0.0 {
        if lo < b {
            for (s_lo, s_hi) in log_shells(lo, b) {
                for (t, wt) in map_rule(&rule, s_lo.ln(), s_hi.ln()) {
                    let r = t.exp();
                    push(r, wt * r.powf(2.0 - kappa));
                }
            }
        }
        return pts;
    }
    let beta = 2.0 - kappa;
    let t_max = b.powf(beta);
    let mut panels: Vec<(f64, f64)> = (0..INNER_PANELS)
        .map(|k| (t_max * 0.5f64.powi(k as i32 + 1), t_max * 0.5f64.powi(k as i32)))
        .collect();
    panels.push((0.0, t_max * 0.5f64.powi(INNER_PANELS as i32)));
    for (p_lo, p_hi) in panels {
        for (t, wt) in map_rule(&rule, p_lo, p_hi) {
            // r underflows to 0 for small beta; the weight still counts
            push(t.powf(1.0 / beta), wt / beta);
        }
    }
    pts
}

/// Inner nodes with the family profile folded into the weight.
fn inner_nodes(fam: &MeasureFamily, dim_z: usize, n_theta: usize, lo: f64, b: f64) -> Vec<QuadratureNode> {
    inner_points(fam.kappa(), dim_z, n_theta, lo, b)
        .into_iter()
        .map(|p| QuadratureNode {
            z: p.z,
            theta: p.theta,
            radius: p.radius,
            weight: p.base * fam.profile(&p.theta, p.radius),
        })
        .collect()
}

/// `int_{a<|z|<b} z z^T dmu` for one part (padded to 2x2); `a` may be zero.
pub fn moment_matrix(spec: &LevyMeasureSpec, part: Part, a: f64, b: f64) -> Result<[[f64; 2]; 2]> {
    spec.validate()?;
    let mut m = [[0.0; 2]; 2];
    let Some(fam) = spec.family(part) else { return Ok(m) };
    let (lo, hi) = fam.support(part);
    let (a, b) = (a.max(lo), b.min(hi));
    if !(a < b) {
        return Ok(m);
    }
    for n in inner_nodes(fam, spec.dim_z, spec.n_theta, a, b) {
        let [t0, t1] = n.theta;
        m[0][0] += n.weight * t0 * t0;
        m[0][1] += n.weight * t0 * t1;
        m[1][1] += n.weight * t1 * t1;
    }
    m[1][0] = m[0][1];
    Ok(m)
}

/// Discretize `spec` with split radius `delta`. `resolution` is the number of
/// radial nodes per doubling of the radius (four graded shells per octave).
pub fn build_quadrature(spec: &LevyMeasureSpec, delta: f64, resolution: usize) -> Result<QuadratureRule> {
    spec.validate()?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid("delta", format!("{delta} not in (0,1)")));
    }
    if resolution < 8 {
        return Err(Error::invalid("resolution", "must be at least 8"));
    }
    let rule = gauss_legendre(resolution / 4);
    let p = spec.dim_z;

    let mut out = QuadratureRule {
        dim_z: p,
        delta,
        resolution,
        outer_compensated: Vec::new(),
        outer_uncompensated: Vec::new(),
        second_moment_inner: 0.0,
        quad_moment_inner: [[0.0; 2]; 2],
        exp_remainder_inner: 0.0,
        z_max: 0.0,
        tail_mass: 0.0,
    };

    if let Some(fam) = &spec.compensated {
        let (lo, hi) = fam.support(Part::Compensated);
        let inner_hi = delta.min(hi);
        if lo < inner_hi {
            for n in inner_nodes(fam, p, spec.n_theta, lo, inner_hi) {
                let [th0, th1] = n.theta;
                out.second_moment_inner += n.weight;
                out.quad_moment_inner[0][0] += n.weight * th0 * th0;
                out.quad_moment_inner[0][1] += n.weight * th0 * th1;
                out.quad_moment_inner[1][1] += n.weight * th1 * th1;
                if p == 1 {
                    out.exp_remainder_inner += n.weight * numerics::exp_remainder_ratio(n.z[0]);
                }
            }
            out.quad_moment_inner[1][0] = out.quad_moment_inner[0][1];
        }
        let outer_lo = lo.max(delta);
        if outer_lo < hi {
            out.outer_compensated = shell_nodes(fam, p, spec.n_theta, &rule, outer_lo, hi, Part::Compensated);
        }
    }

    if let Some(fam) = &spec.uncompensated {
        if let Some((lo, hi)) = spec.effective_support(Part::Uncompensated) {
            out.outer_uncompensated = shell_nodes(fam, p, spec.n_theta, &rule, lo, hi, Part::Uncompensated);
            out.z_max = hi;
            if fam.support(Part::Uncompensated).1.is_infinite() {
                out.tail_mass = spec.tail_bound(fam, hi);
            }
        }
    }
    if out.z_max == 0.0 {
        out.z_max = if out.outer_compensated.is_empty() { delta } else { 1.0 };
    }
    Ok(out)
}

/// Hypothesis-(M) diagnostics of a discretized measure pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentReport {
    /// `int |z|^2 dmu_1`, inner moment plus outer nodes.
    pub compensated_second_moment: f64,
    pub compensated_inner_second_moment: f64,
    pub compensated_outer_mass: f64,
    /// `int dmu_2` up to `z_max`.
    pub uncompensated_mass: f64,
    pub uncompensated_tail_mass: f64,
    pub z_max: f64,
    pub second_moment_finite: bool,
    pub mass_finite: bool,
}

impl MomentReport {
    pub fn passes(&self) -> bool {
        self.second_moment_finite && self.mass_finite
    }
}

/// Finiteness threshold used by the moment report.
pub const FINITE_THRESHOLD: f64 = 1e12;

pub fn measure_moments(_spec: &LevyMeasureSpec, rule: &QuadratureRule) -> MomentReport {
    let outer_second: f64 = rule
        .outer_compensated
        .iter()
        .map(|n| n.weight * n.radius * n.radius)
        .sum();
    let second = rule.second_moment_inner + outer_second;
    let mass2 = rule.outer_mass(Part::Uncompensated);
    let total2 = mass2 + rule.tail_mass;
    MomentReport {
        compensated_second_moment: second,
        compensated_inner_second_moment: rule.second_moment_inner,
        compensated_outer_mass: rule.outer_mass(Part::Compensated),
        uncompensated_mass: mass2,
        uncompensated_tail_mass: rule.tail_mass,
        z_max: rule.z_max,
        second_moment_finite: second.is_finite() && second < FINITE_THRESHOLD,
        mass_finite: total2.is_finite() && total2 < FINITE_THRESHOLD,
    }
}

/// Inner radius of `mu_{2,eps}` in a concentrating sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mu2Cutoff {
    /// No `mu_2` part.
    Absent,
    /// `mu_2` on `0 < |z| < 1` (infinite mass, finite quadratic moments).
    Untruncated,
    Fixed { radius: f64 },
    /// `mu_2` on `eps < |z| < 1`.
    Eps,
}

impl Mu2Cutoff {
    pub fn radius(&self, eps: f64) -> Option<f64> {
        match self {
            Mu2Cutoff::Absent => None,
            Mu2Cutoff::Untruncated => Some(0.0),
            Mu2Cutoff::Fixed { radius } => Some(*radius),
            Mu2Cutoff::Eps => Some(eps),
        }
    }
}

/// The sequence `mu_{1,eps} = eps g(z) |z|^(-P-2+eps) 1_{|z|<1} dz` with `mu_{2,eps}`
/// the same density on `cutoff(eps) < |z| < 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentratingSequence {
    pub dim_z: usize,
    pub g0: f64,
    pub g_grad: Vec<f64>,
    pub mu2_cutoff: Mu2Cutoff,
    #[serde(default = "default_n_theta")]
    pub n_theta: usize,
}

impl ConcentratingSequence {
    pub fn family(&self, eps: f64) -> MeasureFamily {
        MeasureFamily::Concentrating {
            eps,
            g0: self.g0,
            g_grad: self.g_grad.clone(),
        }
    }

    /// The measure pair at parameter `eps`. `mu_2` is included only when it has
    /// finite mass (positive cutoff radius).
    pub fn measure(&self, eps: f64, include_mu1: bool) -> LevyMeasureSpec {
        let fam = self.family(eps);
        let mu2 = match self.mu2_cutoff.radius(eps) {
            Some(r) if r > 0.0 => Some(fam.clone().truncated(r)),
            _ => None,
        };
        LevyMeasureSpec {
            dim_z: self.dim_z,
            compensated: include_mu1.then_some(fam),
            uncompensated: mu2,
            n_theta: self.n_theta,
        }
    }

    /// Closed-form value of `int_{|z|<delta} z^T Y z dmu_{1,eps}`.
    pub fn quadratic_limit(&self, trace_y: f64, delta: f64, eps: f64) -> f64 {
        let p = self.dim_z as f64;
        trace_y * self.g0 * sphere_area(self.dim_z) / p * delta.min(1.0).powf(eps)
    }

    /// Coefficient `c` with `A_1 = c I`: `int z^T Y z dmu_{1,eps} -> c^2 tr Y`.
    pub fn covariance_factor(&self) -> f64 {
        (self.g0 * sphere_area(self.dim_z) / self.dim_z as f64).sqrt()
    }

    /// Limiting drift vector `a` of the `mu_2` part.
    pub fn drift_limit(&self) -> Vec<f64> {
        let k = sphere_area(self.dim_z) / self.dim_z as f64;
        self.g_grad.iter().map(|g| g * k).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcentrationRow {
    pub eps: f64,
    /// `int_{|z|<delta} z^T Y z dmu_{1,eps}`.
    pub inner_quadratic: f64,
    /// `int_{|z|<delta} (z^T Y z + q . z) dmu_{2,eps}`.
    pub inner_first_moment: f64,
    /// `int_{|z|>delta} (dmu_{1,eps} + dmu_{2,eps})`.
    pub outer_mass: f64,
}

/// Tabulate the concentration integrals along a decreasing list of `eps`.
pub fn concentration_limit(
    seq: &ConcentratingSequence,
    y_matrix: &[Vec<f64>],
    q_vec: &[f64],
    delta: f64,
    eps_list: &[f64],
) -> Result<Vec<ConcentrationRow>> {
    let p = seq.dim_z;
    if !(1..=2).contains(&p) {
        return Err(Error::UnsupportedDimension(p));
    }
    if y_matrix.len() != p || y_matrix.iter().any(|row| row.len() != p) {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: y_matrix.len(),
        });
    }
    for i in 0..p {
        for j in 0..p {
            if (y_matrix[i][j] - y_matrix[j][i]).abs() > 1e-12 * (1.0 + y_matrix[i][j].abs()) {
                return Err(Error::invalid("y_matrix", "must be symmetric"));
            }
        }
    }
    if q_vec.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: q_vec.len(),
        });
    }
    if !(delta > 0.0) {
        return Err(Error::invalid("delta", "must be positive"));
    }
    if eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::invalid("eps_list", "must be strictly decreasing"));
    }
    let inner_hi = delta.min(1.0);
    let quad = |z: &[f64; 2]| -> f64 {
        let mut s = 0.0;
        for i in 0..p {
            for j in 0..p {
                s += z[i] * y_matrix[i][j] * z[j];
            }
        }
        s
    };
    let rule = gauss_legendre(8);
    let mut rows = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let fam = seq.family(eps);
        fam.validate(p)?;
        let kappa = 2.0 - eps;
        let slope = |theta: &[f64; 2]| -> f64 { (0..p).map(|i| seq.g_grad[i] * theta[i]).sum() };
        let inner1: f64 = inner_points(kappa, p, seq.n_theta, 0.0, inner_hi)
            .iter()
            .map(|pt| pt.base * eps * (seq.g0 + pt.radius * slope(&pt.theta)) * quad(&pt.theta))
            .sum();
        let mut inner2 = 0.0;
        let mut outer = 0.0;
        if delta < 1.0 {
            outer += shell_nodes(&fam, p, seq.n_theta, &rule, delta, 1.0, Part::Compensated)
                .iter()
                .map(|n| n.weight)
                .sum::<f64>();
        }
        if let Some(cut) = seq.mu2_cutoff.radius(eps) {
            let lo = cut.min(inner_hi);
            // q . z against the even part of g cancels between opposite directions,
            // leaving eps (q . theta)(g_grad . theta); dropping the cancelling
            // O(1/|z|) terms avoids round-off near the origin.
            for pt in inner_points(kappa, p, seq.n_theta, lo, inner_hi) {
                let qz: f64 = (0..p).map(|i| q_vec[i] * pt.theta[i]).sum();
                let even = eps * (seq.g0 + pt.radius * slope(&pt.theta)) * quad(&pt.theta);
                inner2 += pt.base * (even + eps * qz * slope(&pt.theta));
            }
            let outer_lo = cut.max(delta);
            if outer_lo < 1.0 {
                outer += shell_nodes(&fam, p, seq.n_theta, &rule, outer_lo, 1.0, Part::Uncompensated)
                    .iter()
                    .map(|n| n.weight)
                    .sum::<f64>();
            }
        }
        rows.push(ConcentrationRow {
            eps,
            inner_quadratic: inner1,
            inner_first_moment: inner2,
            outer_mass: outer,
        });
    }
    Ok(rows)
}

/// A single compound-Poisson event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpEvent {
    pub time: f64,
    pub z: [f64; 2],
    pub part: Part,
}

/// Compound-Poisson event stream for the measure restricted to `|z| > cutoff`.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpStream {
    pub events: Vec<JumpEvent>,
    /// Total intensity of the restricted measure.
    pub rate: f64,
    /// `-int_{cutoff<|z|<1} z dmu_1`.
    pub compensator_drift: [f64; 2],
}

#[derive(Debug, Clone)]
struct Cell {
    part: Part,
    theta: [f64; 2],
    a: f64,
    b: f64,
    w_max: f64,
}


/// Inverse-CDF sampler over the graded radial cells of a restricted measure.
#[derive(Debug, Clone)]
pub struct JumpSampler {
    spec: LevyMeasureSpec,
    cells: Vec<Cell>,
    cdf: Vec<f64>,
    rate: f64,
    /// `int_{cutoff<|z|<1} z dmu_1`.
    pub first_moment_compensated: [f64; 2],
    /// `int_{cutoff<|z|<1} (e^z - 1) dmu_1` (one-dimensional jumps).
    pub exp_moment_compensated: f64,
    /// `int_{|z|<cutoff} |z|^2 dmu_1`, the scale of the dropped small jumps.
    pub dropped_second_moment: f64,
}

impl JumpSampler {
    pub fn new(spec: &LevyMeasureSpec, cutoff: f64) -> Result<Self> {
        spec.validate()?;
        if !(cutoff >= 0.0) {
            return Err(Error::invalid("cutoff", "must be nonnegative"));
        }
        let rule = gauss_legendre(8);
        let p = spec.dim_z;
        let mut cells = Vec::new();
        let mut masses = Vec::new();
        let mut first = [0.0; 2];
        let mut exp_moment = 0.0;
        let mut dropped = 0.0;
        for part in [Part::Compensated, Part::Uncompensated] {
            let Some(fam) = spec.family(part) else { continue };
            let Some((lo, hi)) = spec.effective_support(part) else { continue };
            let a = lo.max(cutoff);
            if part == Part::Compensated {
                if lo == 0.0 && cutoff == 0.0 {
                    return Err(Error::InfiniteMass);
                }
                if lo < cutoff {
                    dropped = inner_nodes(fam, p, spec.n_theta, lo, cutoff.min(hi))
                        .iter()
                        .map(|n| n.weight)
                        .sum();
                }
            }
            if a >= hi {
                continue;
            }
            for (theta, wa) in directions(p, spec.n_theta) {
                for (s_lo, s_hi) in log_shells(a, hi) {
                    let mut mass = 0.0;
                    for (t, wt) in map_rule(&rule, s_lo.ln(), s_hi.ln()) {
                        let r = t.exp();
                        let w = wt * r.powf(-fam.kappa()) * fam.profile(&theta, r) * wa;
                        mass += w;
                        if part == Part::Compensated {
                            first[0] += w * r * theta[0];
                            first[1] += w * r * theta[1];
                            exp_moment += w * (r * theta[0]).exp_m1();
                        }
                    }
                    let w_max = fam.profile(&theta, s_lo).max(fam.profile(&theta, s_hi));
                    cells.push(Cell {
                        part,
                        theta,
                        a: s_lo,
                        b: s_hi,
                        w_max,
                    });
                    masses.push(mass);
                }
            }
        }
        let mut cdf = Vec::with_capacity(masses.len());
        let mut acc = 0.0;
        for m in &masses {
            acc += m;
            cdf.push(acc);
        }
        Ok(Self {
            spec: spec.clone(),
            cells,
            cdf,
            rate: acc,
            first_moment_compensated: first,
            exp_moment_compensated: exp_moment,
            dropped_second_moment: dropped,
        })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Draw one jump `(z, part)` from the normalized restricted measure.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ([f64; 2], Part) {
        loop {
            let u: f64 = rng.random::<f64>() * self.rate;
            let idx = self.cdf.partition_point(|&c| c < u).min(self.cells.len() - 1);
            let cell = &self.cells[idx];
            let fam = self.spec.family(cell.part).expect("cell family");
            let kappa = fam.kappa();
            // density proportional to r^(-1-kappa) on [a, b]
            let (ak, bk) = (cell.a.powf(-kappa), cell.b.powf(-kappa));
            let v: f64 = rng.random();
            let r = (ak - v * (ak - bk)).powf(-1.0 / kappa).clamp(cell.a, cell.b);
            let accept = fam.profile(&cell.theta, r) / cell.w_max;
            if rng.random::<f64>() <= accept {
                return ([r * cell.theta[0], r * cell.theta[1]], cell.part);
            }
        }
    }
}

/// Compound-Poisson stream of the measure restricted to `|z| > cutoff` on `[0, horizon]`.
pub fn sample_jumps(spec: &LevyMeasureSpec, cutoff: f64, horizon: f64, rng_seed: u64) -> Result<JumpStream> {
    let sampler = JumpSampler::new(spec, cutoff)?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mean = sampler.rate() * horizon;
    let count = if mean > 0.0 {
        Poisson::new(mean)
            .map_err(|e| Error::invalid("rate", e.to_string()))?
            .sample(&mut rng) as usize
    } else {
        0
    };
    let mut times: Vec<f64> = (0..count).map(|_| rng.random::<f64>() * horizon).collect();
    times.sort_by(f64::total_cmp);
    let events = times
        .into_iter()
        .map(|time| {
            let (z, part) = sampler.sample(&mut rng);
            JumpEvent { time, z, part }
        })
        .collect();
    let m = sampler.first_moment_compensated;
    Ok(JumpStream {
        events,
        rate: sampler.rate(),
        compensator_drift: [-m[0], -m[1]],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stable_inner_moment_unit_alpha() {
        let spec = LevyMeasureSpec::stable(1, 1.0, 1.0);
        let rule = build_quadrature(&spec, 0.1, 16).unwrap();
        assert!((rule.second_moment_inner - 0.2).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_parameters() {
        let spec = LevyMeasureSpec::stable(1, 2.5, 1.0);
        assert!(matches!(
            build_quadrature(&spec, 0.1, 16),
            Err(Error::InvalidParameter { name: "alpha", .. })
        ));
        let spec = LevyMeasureSpec::stable(3, 1.0, 1.0);
        assert_eq!(build_quadrature(&spec, 0.1, 16), Err(Error::UnsupportedDimension(3)));
        let spec = LevyMeasureSpec::stable(1, 1.0, 1.0);
        assert!(build_quadrature(&spec, 1.5, 16).is_err());
        assert!(build_quadrature(&spec, 0.1, 4).is_err());
        let tempered_2d = LevyMeasureSpec::new(
            2,
            Some(MeasureFamily::Tempered {
                c: 1.0,
                g: 5.0,
                m: 5.0,
                y: 0.5,
            }),
            None,
        );
        assert!(build_quadrature(&tempered_2d, 0.1, 16).is_err());
    }

    #[test]
    fn untruncated_concentrating_mu2_is_rejected() {
        let fam = MeasureFamily::Concentrating {
            eps: 0.5,
            g0: 1.0,
            g_grad: vec![0.0],
        };
        let spec = LevyMeasureSpec::new(1, None, Some(fam));
        assert!(build_quadrature(&spec, 0.1, 16).is_err());
    }

    #[test]
    fn truncated_beyond_support_is_empty() {
        let fam = MeasureFamily::Concentrating {
            eps: 0.5,
            g0: 1.0,
            g_grad: vec![0.0],
        }
        .truncated(2.0);
        let spec = LevyMeasureSpec::new(1, None, Some(fam));
        let rule = build_quadrature(&spec, 0.1, 16).unwrap();
        assert_eq!(measure_moments(&spec, &rule).uncompensated_mass, 0.0);
    }

    #[test]
    fn nonsymmetric_y_rejected() {
        let seq = ConcentratingSequence {
            dim_z: 2,
            g0: 1.0,
            g_grad: vec![0.0, 0.0],
            mu2_cutoff: Mu2Cutoff::Absent,
            n_theta: 16,
        };
        let y = vec![vec![1.0, 0.5], vec![0.0, 1.0]];
        assert!(concentration_limit(&seq, &y, &[0.0, 0.0], 0.5, &[1.0]).is_err());
    }

    #[test]
    fn empty_measure_stream() {
        let spec = LevyMeasureSpec::empty(1);
        let s = sample_jumps(&spec, 0.1, 10.0, 7).unwrap();
        assert!(s.events.is_empty());
        assert_eq!(s.compensator_drift, [0.0, 0.0]);
    }

    #[test]
    fn zero_cutoff_on_singular_measure_fails() {
        let spec = LevyMeasureSpec::stable(1, 1.0, 1.0);
        assert_eq!(sample_jumps(&spec, 0.0, 1.0, 1).unwrap_err(), Error::InfiniteMass);
    }
}
