use super::{dot, norm, norm_f64, DenseMatrix, NumericsError, Scalar};

/// Relative residual below which a new column counts as linearly dependent.
pub const BREAKDOWN_TOL: f64 = 1e-14;

/// Result of orthonormalizing a column against a basis:
/// `new_column = basis * coeffs + norm * vector`.
#[derive(Clone, Debug)]
pub struct Orthonormalized<T> {
    pub vector: Vec<T>,
    pub coeffs: Vec<T>,
    pub norm: T,
}

/// Modified Gram-Schmidt with one full reorthogonalization pass.
///
/// `basis` must have orthonormal columns. Exact dependence (residual norm
/// below `BREAKDOWN_TOL` times the input norm) is reported as
/// [`NumericsError::Breakdown`].
pub fn orthonormalize<T: Scalar>(
    basis: &DenseMatrix<T>,
    new_column: &[T],
) -> Result<Orthonormalized<T>, NumericsError> {
    if basis.cols() > 0 && basis.rows() != new_column.len() {
        return Err(NumericsError::Shape(format!(
            "basis has {} rows but the new column has length {}",
            basis.rows(),
            new_column.len()
        )));
    }
    let Some(first) = new_column.first() else {
        return Err(NumericsError::Shape("orthonormalizing an empty vector".into()));
    };
    let ctx = first.ctx();
    let input_norm = norm_f64(new_column);
    let mut w = new_column.to_vec();
    let mut coeffs = vec![T::zero(ctx); basis.cols()];
    for _pass in 0..2 {
        for (j, cj) in coeffs.iter_mut().enumerate() {
            let q = basis.column(j);
            let h = dot(q, &w);
            for (wi, qi) in w.iter_mut().zip(q) {
                *wi = wi.clone() - h.clone() * qi.clone();
            }
            *cj = cj.clone() + h;
        }
    }
    let nrm = norm(&w);
    let nrm_f = nrm.abs_f64();
    if !(nrm_f > BREAKDOWN_TOL * input_norm) {
        return Err(NumericsError::Breakdown {
            residual: nrm_f,
            input: input_norm,
        });
    }
    let inv = T::one(ctx) / nrm.clone();
    for wi in w.iter_mut() {
        *wi = wi.clone() * inv.clone();
    }
    Ok(Orthonormalized {
        vector: w,
        coeffs,
        norm: nrm,
    })
}
