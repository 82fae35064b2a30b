use super::{dot, norm, norm_f64, DenseMatrix, NumericsError, Scalar};

/// Default breakdown threshold in double precision; scaled by the unit
/// roundoff ratio for other precisions.
pub const DEFAULT_BREAKDOWN_TOL: f64 = 1e-13;

/// Biorthogonal tridiagonalization `W^H A V = T`, `W^H V = I`.
#[derive(Clone, Debug)]
pub struct Tridiagonalization<T> {
    pub right: DenseMatrix<T>,
    pub left: DenseMatrix<T>,
    /// `T[j, j]`
    pub diag: Vec<T>,
    /// `T[j + 1, j]`
    pub sub: Vec<T>,
    /// `T[j, j + 1]`
    pub sup: Vec<T>,
}

impl<T: Scalar> Tridiagonalization<T> {
    pub fn tridiagonal(&self) -> DenseMatrix<T> {
        let n = self.diag.len();
        let ctx = self.diag[0].ctx();
        let mut t = DenseMatrix::zeros_in(n, n, ctx);
        for j in 0..n {
            t[(j, j)] = self.diag[j].clone();
            if j + 1 < n {
                t[(j + 1, j)] = self.sub[j].clone();
                t[(j, j + 1)] = self.sup[j].clone();
            }
        }
        t
    }
}

pub fn default_breakdown_tol<T: Scalar>(ctx: T::Ctx) -> f64 {
    DEFAULT_BREAKDOWN_TOL * T::epsilon(ctx) / f64::EPSILON * 2.0
}

/// Two-sided Lanczos with full re-biorthogonalization.
///
/// Right vectors are normalized (`gamma = ||r||`) and the left vectors carry
/// the scaling that keeps `W^H V = I`. A step whose inner product `s^H r` is
/// below `tol * ||r|| * ||s||` is reported as a serious breakdown, as is an
/// exactly vanishing residual before the last step.
pub fn two_sided_lanczos<T: Scalar>(
    a: &DenseMatrix<T>,
    v: &[T],
    w: &[T],
    tol: Option<f64>,
) -> Result<Tridiagonalization<T>, NumericsError> {
    let n = a.rows();
    if !a.is_square() || v.len() != n || w.len() != n || n == 0 {
        return Err(NumericsError::Shape(format!(
            "Lanczos on a {}x{} matrix with start vectors of length {} and {}",
            a.rows(),
            a.cols(),
            v.len(),
            w.len()
        )));
    }
    let ctx = v[0].ctx();
    let tol = tol.unwrap_or_else(|| default_breakdown_tol::<T>(ctx));
    let ah = a.adjoint();

    let vn = norm(v);
    if vn.abs_f64() == 0.0 {
        return Err(NumericsError::SeriousBreakdown { step: 0, ratio: 0.0 });
    }
    let q1: Vec<T> = v.iter().map(|x| x.clone() / vn.clone()).collect();
    let om = dot(w, &q1);
    let ratio = om.abs_f64() / norm_f64(w).max(f64::MIN_POSITIVE);
    if !(ratio > tol) {
        return Err(NumericsError::SeriousBreakdown { step: 0, ratio });
    }
    let om_c = om.conj();
    let p1: Vec<T> = w.iter().map(|x| x.clone() / om_c.clone()).collect();

    let mut qs: Vec<Vec<T>> = vec![q1];
    let mut ps: Vec<Vec<T>> = vec![p1];
    let mut diag = Vec::with_capacity(n);
    let mut sub = Vec::with_capacity(n.saturating_sub(1));
    let mut sup = Vec::with_capacity(n.saturating_sub(1));

    for j in 0..n {
        let aq = a.matvec(&qs[j])?;
        let ahp = ah.matvec(&ps[j])?;
        let alpha = dot(&ps[j], &aq);
        diag.push(alpha);
        if j + 1 == n {
            break;
        }
        let mut r = aq;
        let mut s = ahp;
        // full re-biorthogonalization, twice
        for _ in 0..2 {
            for i in 0..=j {
                let cr = dot(&ps[i], &r);
                let cs = dot(&qs[i], &s);
                for k in 0..n {
                    r[k] = r[k].clone() - cr.clone() * qs[i][k].clone();
                    s[k] = s[k].clone() - cs.clone() * ps[i][k].clone();
                }
            }
        }
        let gamma = norm(&r);
        let (rn, sn) = (gamma.abs_f64(), norm_f64(&s));
        let omega = dot(&s, &r);
        let ratio = if rn == 0.0 || sn == 0.0 {
            0.0
        } else {
            omega.abs_f64() / (rn * sn)
        };
        if !(ratio > tol) {
            return Err(NumericsError::SeriousBreakdown { step: j + 1, ratio });
        }
        let beta = omega / gamma.clone();
        let bc = beta.conj();
        qs.push(r.into_iter().map(|x| x / gamma.clone()).collect());
        ps.push(s.into_iter().map(|x| x / bc.clone()).collect());
        sub.push(gamma);
        sup.push(beta);
    }

    Ok(Tridiagonalization {
        right: DenseMatrix::from_columns(n, &qs)?,
        left: DenseMatrix::from_columns(n, &ps)?,
        diag,
        sub,
        sup,
    })
}
