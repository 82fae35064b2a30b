//! Transverse operators and scalar DtN functions.

mod dtn;
mod operator;

use num_complex::Complex64;

pub use dtn::{
    branch_sqrt, count_real_poles, discrete_const, dtn_scalar, dtn_scalar_with_threshold, DtnSpec, PoleCount,
    DEFAULT_POLE_THRESHOLD,
};
pub use operator::{
    apply_function, build_operator, solve_shifted, spectral_intervals, Operator, OperatorKind, SpectralFunction,
    SpectralIntervals,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OperatorError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid DtN specification: {0}")]
    InvalidSpec(String),
    #[error("DtN function evaluated at or near a pole (lambda = {lambda})")]
    NearPole { lambda: Complex64 },
    #[error("shift {shift} collides with eigenvalue {eigenvalue}")]
    Collision { eigenvalue: f64, shift: Complex64 },
    #[error("operator is semidefinite")]
    Semidefinite,
    #[error("{count} real poles found, outside the bracket [{floor}, {floor} + 1]")]
    PoleCountBracket { count: usize, floor: usize },
}
