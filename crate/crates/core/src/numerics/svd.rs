use super::{dot, DenseMatrix, NumericsError, Scalar};

const MAX_SWEEPS: usize = 80;

/// Smallest singular value and a corresponding unit right singular vector.
#[derive(Clone, Debug)]
pub struct SingularPair<T> {
    pub value: f64,
    pub vector: Vec<T>,
}

/// Full right-side SVD data: singular values (unsorted, one per column) and
/// the unitary right factor.
#[derive(Clone, Debug)]
pub struct RightSvd<T> {
    pub values: Vec<f64>,
    pub right: DenseMatrix<T>,
}

/// Computes a right singular vector for a smallest singular value of `m`.
///
/// Tall inputs are first reduced to a square triangular factor by Householder
/// QR; the factor is then diagonalized by one-sided Jacobi rotations, which
/// resolves small singular values to high relative accuracy. Ties keep the
/// last column attaining the minimum.
pub fn smallest_singular_vector<T: Scalar>(m: &DenseMatrix<T>) -> Result<SingularPair<T>, NumericsError> {
    let svd = right_svd(m)?;
    let mut best = 0;
    for (j, s) in svd.values.iter().enumerate() {
        if *s <= svd.values[best] {
            best = j;
        }
    }
    Ok(SingularPair {
        value: svd.values[best],
        vector: svd.right.column(best).to_vec(),
    })
}

pub fn right_svd<T: Scalar>(m: &DenseMatrix<T>) -> Result<RightSvd<T>, NumericsError> {
    if m.rows() == 0 || m.cols() == 0 {
        return Err(NumericsError::Shape("singular vectors of an empty matrix".into()));
    }
    let mut work = if m.rows() > m.cols() {
        householder_r(m)
    } else {
        m.clone()
    };
    let right = one_sided_jacobi(&mut work)?;
    let values = (0..work.cols()).map(|j| super::norm_f64(work.column(j))).collect();
    Ok(RightSvd { values, right })
}

/// Upper-triangular factor `R` of a thin QR factorization of a tall matrix.
pub fn householder_r<T: Scalar>(m: &DenseMatrix<T>) -> DenseMatrix<T> {
    let (rows, cols) = (m.rows(), m.cols());
    let ctx = m[(0, 0)].ctx();
    let mut a = m.clone();
    for k in 0..cols.min(rows) {
        let x: Vec<T> = (k..rows).map(|i| a[(i, k)].clone()).collect();
        let xnorm = super::norm(&x);
        if xnorm.abs_f64() == 0.0 {
            continue;
        }
        let x0 = x[0].clone();
        let phase = if x0.abs_f64() == 0.0 {
            T::one(ctx)
        } else {
            x0.clone() / x0.modulus()
        };
        let alpha = -(phase * xnorm);
        let mut v = x;
        v[0] = v[0].clone() - alpha.clone();
        let vnorm2 = dot(&v, &v);
        if vnorm2.abs_f64() == 0.0 {
            continue;
        }
        let two = T::from_f64(2.0, ctx);
        for j in k..cols {
            let col: Vec<T> = (k..rows).map(|i| a[(i, j)].clone()).collect();
            let f = two.clone() * dot(&v, &col) / vnorm2.clone();
            for (off, vi) in v.iter().enumerate() {
                let upd = a[(k + off, j)].clone() - f.clone() * vi.clone();
                a[(k + off, j)] = upd;
            }
        }
        a[(k, k)] = alpha;
        for i in (k + 1)..rows {
            a[(i, k)] = T::zero(ctx);
        }
    }
    a.submatrix(0..cols.min(rows), 0..cols)
}

/// Orthogonalizes the columns of `b` in place and returns the accumulated
/// unitary right factor `V` (so that the original `b` equals `b_out V^H`).
fn one_sided_jacobi<T: Scalar>(b: &mut DenseMatrix<T>) -> Result<DenseMatrix<T>, NumericsError> {
    let n = b.cols();
    let ctx = b[(0, 0)].ctx();
    let mut v = DenseMatrix::identity_in(n, ctx);
    let tol = 4.0 * T::epsilon(ctx);
    let one = T::one(ctx);
    let two = T::from_f64(2.0, ctx);
    // columns below this squared norm are numerically zero
    let negligible = (T::epsilon(ctx) * b.frobenius_norm()).powi(2);
    for _sweep in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = dot(b.column(p), b.column(p));
                let beta = dot(b.column(q), b.column(q));
                let gamma = dot(b.column(p), b.column(q));
                let (af, bf, gf) = (alpha.abs_f64(), beta.abs_f64(), gamma.abs_f64());
                if gf == 0.0 || gf <= tol * (af * bf).sqrt() || af.min(bf) <= negligible {
                    continue;
                }
                rotated = true;
                let gabs = gamma.modulus();
                let phase_conj = (gamma.clone() / gabs.clone()).conj();
                let zeta = (beta - alpha) / (two.clone() * gabs);
                let zeta_abs = zeta.modulus();
                let mut t = one.clone() / (zeta_abs.clone() + (one.clone() + zeta.clone() * zeta.clone()).sqrt());
                if zeta.to_c64().re < 0.0 {
                    t = -t;
                }
                let c = one.clone() / (one.clone() + t.clone() * t.clone()).sqrt();
                let s = c.clone() * t;
                rotate_columns(b, p, q, &phase_conj, &c, &s);
                rotate_columns(&mut v, p, q, &phase_conj, &c, &s);
            }
        }
        if !rotated {
            return Ok(v);
        }
    }
    Err(NumericsError::NoConvergence("one-sided Jacobi SVD"))
}

fn rotate_columns<T: Scalar>(m: &mut DenseMatrix<T>, p: usize, q: usize, phase_conj: &T, c: &T, s: &T) {
    for i in 0..m.rows() {
        let bp = m[(i, p)].clone();
        let bq = phase_conj.clone() * m[(i, q)].clone();
        m[(i, p)] = c.clone() * bp.clone() - s.clone() * bq.clone();
        m[(i, q)] = s.clone() * bp + c.clone() * bq;
    }
}
