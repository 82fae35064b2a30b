//! Dense linear algebra over a generic complex scalar.

mod hermitian;
mod lanczos;
mod matrix;
mod ortho;
mod qz;
mod scalar;
mod svd;

pub use hermitian::{hermitian_eigen, symmetric_eigen};
pub use lanczos::{default_breakdown_tol, two_sided_lanczos, Tridiagonalization, DEFAULT_BREAKDOWN_TOL};
pub use matrix::{axpy, dot, inverse, norm, norm_f64, scale, DenseMatrix, Lu};
pub use ortho::{orthonormalize, Orthonormalized, BREAKDOWN_TOL};
pub use qz::{generalized_eigenvalues, generalized_schur, Extended, GeneralizedSchur};
pub use scalar::{ExtComplex, Precision, Real, Scalar};
pub use svd::{householder_r, right_svd, smallest_singular_vector, RightSvd, SingularPair};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NumericsError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("matrix is singular (pivot {pivot})")]
    Singular { pivot: usize },
    #[error("breakdown: residual {residual:e} for input norm {input:e}")]
    Breakdown { residual: f64, input: f64 },
    #[error("serious breakdown in two-sided Lanczos at step {step} (ratio {ratio:e})")]
    SeriousBreakdown { step: usize, ratio: f64 },
    #[error("singular pencil: det(H - tK) vanishes identically")]
    SingularPencil,
    #[error("no convergence in {0}")]
    NoConvergence(&'static str),
    #[error("non-finite values in {0}")]
    NonFinite(&'static str),
}
