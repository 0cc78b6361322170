//! Fixtures shared by the benchmarks.

use nonlocal_ql::{Boundary, GridField, GridSpec, JumpFamily, JumpMapSpec, LevyMeasureSpec, OperatorConfig};

/// Smooth bump sampled on a centred grid.
pub fn bump(dim: usize, n: usize) -> GridField {
    let grid = GridSpec::new(dim, 3.0, n).expect("valid grid");
    grid.sample(|x| (-x.iter().map(|v| v * v).sum::<f64>()).exp())
}

/// Operator with the fractional stable measure of order `alpha`.
pub fn operator(family: JumpFamily, dim: usize, alpha: f64, resolution: usize) -> OperatorConfig {
    let jump = JumpMapSpec::new(family, dim);
    let measure = LevyMeasureSpec::fractional(jump.dim_z(), alpha);
    OperatorConfig::new(jump, measure, 0.05, resolution, Boundary::ProjectToBall).expect("valid operator")
}
