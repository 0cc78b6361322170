use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Solve,
    Parabolic,
    LimitSweep,
    McCheck,
    Validate,
    OperatorProbe,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::Solve,
        Scenario::Parabolic,
        Scenario::LimitSweep,
        Scenario::McCheck,
        Scenario::Validate,
        Scenario::OperatorProbe,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Solve => "solve",
            Scenario::Parabolic => "parabolic",
            Scenario::LimitSweep => "limit-sweep",
            Scenario::McCheck => "mc-check",
            Scenario::Validate => "validate",
            Scenario::OperatorProbe => "operator-probe",
        }
    }

    fn needs(self) -> &'static [&'static str] {
        match self {
            Scenario::Solve | Scenario::Parabolic | Scenario::OperatorProbe => &["measure", "jump", "problem"],
            Scenario::LimitSweep => &["jump", "problem"],
            Scenario::McCheck => &["measure", "jump", "problem", "mc"],
            Scenario::Validate => &["measure", "jump"],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeasurePreset {
    Stable,
    Fractional,
    Tempered,
    Concentrating,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureTable {
    pub family: MeasurePreset,
    pub alpha: Option<f64>,
    #[serde(default = "one")]
    pub c_alpha: f64,
    #[serde(default = "one")]
    pub c: f64,
    #[serde(default = "five")]
    pub g: f64,
    #[serde(default = "five")]
    pub m: f64,
    #[serde(default = "half")]
    pub y: f64,
    pub eps: Option<f64>,
    #[serde(default = "one")]
    pub g0: f64,
    #[serde(default)]
    pub g_grad: Vec<f64>,
    /// Inner radius of the truncated `mu_2` of the concentrating family.
    pub mu2_radius: Option<f64>,
    #[serde(default = "yes")]
    pub include_mu1: bool,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    /// Small-jump cutoff for path sampling.
    #[serde(default = "default_cutoff")]
    pub cutoff: f64,
    #[serde(default = "default_n_theta")]
    pub n_theta: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JumpPreset {
    Identity,
    DirectionalGradient,
    PLaplaceFull,
    PLaplaceSplit,
    Curvature,
    IsotropicScalar,
    ExponentialCompensator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalarPreset {
    Const1,
    AbsPower,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpTable {
    pub family: JumpPreset,
    #[serde(default = "two")]
    pub p_exp: f64,
    #[serde(default = "default_scalar")]
    pub a_function: ScalarPreset,
    /// Exponent of `abs_power`.
    #[serde(default = "one")]
    pub a_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldPreset {
    Zero,
    Constant,
    Gaussian,
    SkewGaussian,
    Cosine,
    Bump,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NonlinearityPreset {
    Linear,
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryPreset {
    ProjectToBall,
    ExtrapolateConstant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemTable {
    #[serde(default = "one_usize")]
    pub dim: usize,
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_rhs")]
    pub rhs: FieldPreset,
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default = "one")]
    pub width: f64,
    #[serde(default = "one")]
    pub wavenumber: f64,
    /// Grid field CSV replacing the `rhs` preset.
    pub rhs_file: Option<PathBuf>,
    /// Initial datum CSV for the parabolic scenario.
    pub u0_file: Option<PathBuf>,
    #[serde(default = "default_nonlinearity")]
    pub nonlinearity: NonlinearityPreset,
    #[serde(default = "one")]
    pub gamma: f64,
    #[serde(default = "default_eps_visc")]
    pub eps_visc: f64,
    pub trunc_m: Option<f64>,
    #[serde(default = "default_boundary")]
    pub boundary: BoundaryPreset,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    pub damping: Option<f64>,
    #[serde(default)]
    pub uniqueness_check: bool,
    #[serde(default = "one")]
    pub t_final: f64,
    pub dt: Option<f64>,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    /// Run the comparison check against `f + comparison_shift`.
    pub comparison_shift: Option<f64>,
    #[serde(default = "default_comparison_tol")]
    pub comparison_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McTable {
    pub n_samples: usize,
    /// Evaluation points; defaults to five points across the core.
    #[serde(default)]
    pub points: Vec<Vec<f64>>,
    #[serde(default = "default_margin")]
    pub margin: f64,
    #[serde(default = "default_horizon")]
    pub max_horizon: f64,
    #[serde(default = "one")]
    pub hessian_bound: f64,
    /// Overrides `measure.cutoff`.
    pub cutoff: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    pub measure: Option<MeasureTable>,
    pub jump: Option<JumpTable>,
    pub problem: Option<ProblemTable>,
    pub mc: Option<McTable>,
}

fn one() -> f64 {
    1.0
}
fn two() -> f64 {
    2.0
}
fn five() -> f64 {
    5.0
}
fn half() -> f64 {
    0.5
}
fn yes() -> bool {
    true
}
fn one_usize() -> usize {
    1
}
fn default_delta() -> f64 {
    0.05
}
fn default_resolution() -> usize {
    32
}
fn default_cutoff() -> f64 {
    0.02
}
fn default_n_theta() -> usize {
    16
}
fn default_scalar() -> ScalarPreset {
    ScalarPreset::Const1
}
fn default_radius() -> f64 {
    4.0
}
fn default_n() -> usize {
    201
}
fn default_rhs() -> FieldPreset {
    FieldPreset::Gaussian
}
fn default_nonlinearity() -> NonlinearityPreset {
    NonlinearityPreset::Linear
}
fn default_eps_visc() -> f64 {
    0.01
}
fn default_boundary() -> BoundaryPreset {
    BoundaryPreset::ProjectToBall
}
fn default_tol() -> f64 {
    1e-8
}
fn default_max_iter() -> usize {
    50_000
}
fn default_max_steps() -> usize {
    2_000_000
}
fn default_alphas() -> Vec<f64> {
    vec![1.5, 1.9, 1.99]
}
fn default_comparison_tol() -> f64 {
    1e-6
}
fn default_margin() -> f64 {
    0.01
}
fn default_horizon() -> f64 {
    40.0
}

/// A single failed check, addressed by its key path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Issue {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Default)]
struct Checker {
    issues: Vec<Issue>,
}

impl Checker {
    fn push(&mut self, path: &str, message: impl Into<String>) {
        self.issues.push(Issue {
            path: path.to_string(),
            message: message.into(),
        });
    }

    fn open(&mut self, path: &str, v: f64, lo: f64, hi: f64) {
        if !(v > lo && v < hi) {
            self.push(path, format!("must lie in ({lo},{hi}), got {v}"));
        }
    }

    fn positive(&mut self, path: &str, v: f64) {
        if !(v > 0.0 && v.is_finite()) {
            self.push(path, format!("must be positive, got {v}"));
        }
    }

    fn nonnegative(&mut self, path: &str, v: f64) {
        if !(v >= 0.0 && v.is_finite()) {
            self.push(path, format!("must be nonnegative, got {v}"));
        }
    }
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    /// Dimension of the jump variable implied by the jump family and grid.
    pub fn dim_z(&self, j: &JumpTable) -> usize {
        match j.family {
            JumpPreset::DirectionalGradient | JumpPreset::ExponentialCompensator => 1,
            _ => self.problem.as_ref().map_or(1, |p| p.dim),
        }
    }

    /// Every structural and range violation, with key paths.
    pub fn issues(&self) -> Vec<Issue> {
        let mut c = Checker::default();
        for table in self.scenario.needs() {
            let present = match *table {
                "measure" => self.measure.is_some(),
                "jump" => self.jump.is_some(),
                "problem" => self.problem.is_some(),
                _ => self.mc.is_some(),
            };
            if !present {
                c.push(table, format!("table is required by scenario {}", self.scenario.name()));
            }
        }
        if let Some(m) = &self.measure {
            check_measure(&mut c, m, self.scenario);
        }
        if let Some(j) = &self.jump {
            check_jump(&mut c, j);
        }
        if let Some(p) = &self.problem {
            check_problem(&mut c, p, self.scenario);
        }
        if let Some(mc) = &self.mc {
            check_mc(&mut c, mc, self.problem.as_ref().map_or(1, |p| p.dim));
        }
        if let (Some(j), Some(m)) = (&self.jump, &self.measure) {
            let dim_z = self.dim_z(j);
            if m.family == MeasurePreset::Tempered && dim_z != 1 {
                c.push("measure.family", "tempered measures are one-dimensional");
            }
            if m.family == MeasurePreset::Concentrating && !m.g_grad.is_empty() && m.g_grad.len() != dim_z {
                c.push("measure.g_grad", format!("expected {dim_z} components, got {}", m.g_grad.len()));
            }
        }
        if self.scenario == Scenario::McCheck {
            if let Some(j) = &self.jump {
                if j.family == JumpPreset::ExponentialCompensator
                    || (j.family == JumpPreset::PLaplaceSplit && j.p_exp > 2.0)
                {
                    c.push("jump.family", "no path representation for this family");
                }
            }
            if let Some(p) = &self.problem {
                if p.nonlinearity != NonlinearityPreset::Linear || p.gamma != 1.0 {
                    c.push("problem.nonlinearity", "mc-check needs the linear resolvent with gamma = 1");
                }
            }
        }
        c.issues
    }
}

fn check_measure(c: &mut Checker, m: &MeasureTable, scenario: Scenario) {
    match m.family {
        MeasurePreset::Stable | MeasurePreset::Fractional => match m.alpha {
            Some(a) => c.open("measure.alpha", a, 0.0, 2.0),
            None if scenario == Scenario::LimitSweep => {}
            None => c.push("measure.alpha", "required for stable families"),
        },
        MeasurePreset::Tempered => {
            c.positive("measure.c", m.c);
            c.positive("measure.g", m.g);
            c.positive("measure.m", m.m);
            c.open("measure.y", m.y, 0.0, 2.0);
        }
        MeasurePreset::Concentrating => {
            match m.eps {
                Some(e) => c.open("measure.eps", e, 0.0, 2.0),
                None => c.push("measure.eps", "required for the concentrating family"),
            }
            c.positive("measure.g0", m.g0);
            if m.g_grad.len() > 2 {
                c.push("measure.g_grad", "at most two components");
            }
            if let Some(r) = m.mu2_radius {
                c.open("measure.mu2_radius", r, 0.0, 1.0);
            }
        }
        MeasurePreset::None => {}
    }
    if m.family == MeasurePreset::Stable {
        c.positive("measure.c_alpha", m.c_alpha);
    }
    c.open("measure.delta", m.delta, 0.0, 1.0);
    if m.resolution < 8 {
        c.push("measure.resolution", format!("must be at least 8, got {}", m.resolution));
    }
    c.positive("measure.cutoff", m.cutoff);
    if m.n_theta < 4 || m.n_theta % 2 == 1 {
        c.push("measure.n_theta", format!("must be even and at least 4, got {}", m.n_theta));
    }
    if scenario == Scenario::LimitSweep && m.family != MeasurePreset::Fractional {
        c.push("measure.family", "limit-sweep runs the fractional family");
    }
}

fn check_jump(c: &mut Checker, j: &JumpTable) {
    if !(j.p_exp >= 2.0 && j.p_exp.is_finite()) {
        c.push("jump.p_exp", format!("must be at least 2, got {}", j.p_exp));
    }
    if j.a_function == ScalarPreset::AbsPower {
        c.nonnegative("jump.a_m", j.a_m);
    }
}

fn check_problem(c: &mut Checker, p: &ProblemTable, scenario: Scenario) {
    if !(1..=2).contains(&p.dim) {
        c.push("problem.dim", format!("must be 1 or 2, got {}", p.dim));
    }
    c.positive("problem.radius", p.radius);
    if p.n < 5 {
        c.push("problem.n", format!("must be at least 5, got {}", p.n));
    }
    if p.dim == 2 && p.n > 401 {
        c.push("problem.n", "two-dimensional grids are capped at 401 per axis");
    }
    c.positive("problem.width", p.width);
    c.positive("problem.gamma", p.gamma);
    c.nonnegative("problem.eps_visc", p.eps_visc);
    if let Some(m) = p.trunc_m {
        c.positive("problem.trunc_m", m);
    }
    c.positive("problem.tol", p.tol);
    if p.max_iter == 0 {
        c.push("problem.max_iter", "must be positive");
    }
    if let Some(d) = p.damping {
        c.open("problem.damping", d, 0.0, 1.0);
        if p.nonlinearity != NonlinearityPreset::Linear {
            c.push("problem.damping", "only used by the linear Picard solver");
        }
    }
    c.positive("problem.t_final", p.t_final);
    if let Some(dt) = p.dt {
        c.positive("problem.dt", dt);
    }
    for (i, t) in p.snapshot_times.iter().enumerate() {
        if !(*t >= 0.0 && *t <= p.t_final) {
            c.push(&format!("problem.snapshot_times[{i}]"), format!("must lie in [0,{}], got {t}", p.t_final));
        }
    }
    if scenario == Scenario::LimitSweep {
        if p.alphas.is_empty() {
            c.push("problem.alphas", "must not be empty");
        }
        for (i, a) in p.alphas.iter().enumerate() {
            c.open(&format!("problem.alphas[{i}]"), *a, 0.0, 2.0);
        }
    }
    if let Some(s) = p.comparison_shift {
        c.nonnegative("problem.comparison_shift", s);
    }
    c.nonnegative("problem.comparison_tolerance", p.comparison_tolerance);
}

fn check_mc(c: &mut Checker, mc: &McTable, dim: usize) {
    if mc.n_samples < 100 {
        c.push("mc.n_samples", format!("must be at least 100, got {}", mc.n_samples));
    }
    for (i, x) in mc.points.iter().enumerate() {
        if x.len() != dim {
            c.push(&format!("mc.points[{i}]"), format!("expected {dim} coordinates, got {}", x.len()));
        }
    }
    c.nonnegative("mc.margin", mc.margin);
    c.positive("mc.max_horizon", mc.max_horizon);
    c.nonnegative("mc.hessian_bound", mc.hessian_bound);
    if let Some(cut) = mc.cutoff {
        c.positive("mc.cutoff", cut);
    }
}

/// Resolve a path from the config relative to the config file's directory.
pub fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}
