//! Gradient-dependent nonlocal operators of Lévy type: measure quadrature, jump
//! maps, operator evaluation, viscosity solvers and Monte-Carlo cross-checks.

// `!(x > 0.0)` rejects NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod grid;
pub mod jump_maps;
pub mod levy_measures;
pub mod nonlocal_operator;
pub mod numerics;
pub mod solvers;
pub mod stochastic;

pub use error::{Error, Result};
pub use grid::{AnalyticField, Field, GridField, GridSpec};
pub use jump_maps::{JumpFamily, JumpMapSpec, LocalOperatorSpec, ScalarFn};
pub use levy_measures::{LevyMeasureSpec, MeasureFamily, Part, QuadratureRule};
pub use nonlocal_operator::{Boundary, GradientSource, OperatorConfig};
pub use stochastic::{McEstimate, PathConfig};
