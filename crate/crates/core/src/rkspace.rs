//! Rational Krylov decompositions `A V K = V H`.

use num_complex::Complex64;

use crate::numerics::{
    dot, generalized_eigenvalues, generalized_schur, norm_f64, orthonormalize, DenseMatrix, Extended, NumericsError,
};
use crate::operators::{Operator, OperatorError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RkspaceError {
    #[error("lucky breakdown at step {step}: the Krylov space is invariant")]
    LuckyBreakdown { step: usize },
    #[error("pencil is reducible at column {column}")]
    Reducible { column: usize },
    #[error("shape error: {0}")]
    Shape(String),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Relative size below which a subdiagonal pair counts as zero.
const REDUCIBLE_TOL: f64 = 1e-14;

/// `(m+1) x m` upper Hessenberg pair.
#[derive(Clone, Debug)]
pub struct Pencil {
    pub h: DenseMatrix<Complex64>,
    pub k: DenseMatrix<Complex64>,
}

impl Pencil {
    pub fn new(h: DenseMatrix<Complex64>, k: DenseMatrix<Complex64>) -> Result<Self, RkspaceError> {
        if h.rows() != k.rows() || h.cols() != k.cols() || h.rows() != h.cols() + 1 {
            return Err(RkspaceError::Shape(format!(
                "pencil of shapes {}x{} and {}x{}",
                h.rows(),
                h.cols(),
                k.rows(),
                k.cols()
            )));
        }
        let p = Self { h, k };
        p.check_unreduced()?;
        Ok(p)
    }

    /// Number of columns `m`.
    pub fn size(&self) -> usize {
        self.h.cols()
    }

    pub fn check_unreduced(&self) -> Result<(), RkspaceError> {
        let scale = self.h.frobenius_norm() + self.k.frobenius_norm();
        for j in 0..self.size() {
            for i in (j + 2)..self.h.rows() {
                if self.h[(i, j)].norm() > REDUCIBLE_TOL * scale || self.k[(i, j)].norm() > REDUCIBLE_TOL * scale {
                    return Err(RkspaceError::Shape(format!("entry ({i}, {j}) below the subdiagonal")));
                }
            }
            let sub = self.h[(j + 1, j)].norm() + self.k[(j + 1, j)].norm();
            if !(sub > REDUCIBLE_TOL * scale) {
                return Err(RkspaceError::Reducible { column: j });
            }
        }
        Ok(())
    }

    /// Lower `m x m` blocks (rows `1..=m`).
    pub fn lower(&self) -> (DenseMatrix<Complex64>, DenseMatrix<Complex64>) {
        let m = self.size();
        (self.h.submatrix(1..m + 1, 0..m), self.k.submatrix(1..m + 1, 0..m))
    }

    /// Leading `(j+1) x j` sub-pencil.
    pub fn leading(&self, j: usize) -> Pencil {
        Pencil {
            h: self.h.submatrix(0..j + 1, 0..j),
            k: self.k.submatrix(0..j + 1, 0..j),
        }
    }
}

/// Rational Krylov decomposition of the space spanned by `basis`.
#[derive(Clone, Debug)]
pub struct Decomposition {
    pub basis: DenseMatrix<Complex64>,
    pub pencil: Pencil,
    pub poles: Vec<Extended>,
    /// `||v||` of the starting vector; `basis e1 = v / ||v||`.
    pub start_norm: f64,
}

impl Decomposition {
    /// Leading `j + 1` basis columns with the matching `(j+1) x j` pencil.
    pub fn truncate(&self, j: usize) -> Decomposition {
        Decomposition {
            basis: self.basis.submatrix(0..self.basis.rows(), 0..j + 1),
            pencil: self.pencil.leading(j),
            poles: self.poles[..j].to_vec(),
            start_norm: self.start_norm,
        }
    }
}

/// Ruhe's rational Krylov sequence: one basis vector per pole, each obtained
/// from the last basis vector by a shifted solve (finite pole) or a product
/// with `A` (infinite pole), then orthonormalized.
pub fn expand(a: &Operator, v: &[Complex64], poles: &[Extended]) -> Result<Decomposition, RkspaceError> {
    let n = a.size();
    if v.len() != n {
        return Err(RkspaceError::Shape(format!(
            "start vector of length {} for size {n}",
            v.len()
        )));
    }
    if n < poles.len() + 1 {
        return Err(RkspaceError::Shape(format!(
            "{} poles exceed dimension {n}",
            poles.len()
        )));
    }
    let vnorm = norm_f64(v);
    if !(vnorm > 0.0) || !vnorm.is_finite() {
        return Err(RkspaceError::Shape("start vector is zero or not finite".into()));
    }
    let m = poles.len();
    let mut basis = DenseMatrix::<Complex64>::zeros(n, 0);
    basis
        .push_column(v.iter().map(|x| x / vnorm).collect())
        .map_err(RkspaceError::Numerics)?;
    let mut h = DenseMatrix::<Complex64>::zeros(m + 1, m);
    let mut k = DenseMatrix::<Complex64>::zeros(m + 1, m);
    for (j, pole) in poles.iter().enumerate() {
        let last = basis.column(j).to_vec();
        let w = match pole {
            Extended::Finite(xi) => a.solve_shifted(*xi, &last)?,
            Extended::Infinity => a.apply(&last)?,
        };
        let out = match orthonormalize(&basis, &w) {
            Ok(o) => o,
            Err(NumericsError::Breakdown { .. }) => return Err(RkspaceError::LuckyBreakdown { step: j }),
            Err(e) => return Err(e.into()),
        };
        let mut col = out.coeffs;
        col.push(out.norm);
        match pole {
            Extended::Finite(xi) => {
                for (i, ci) in col.iter().enumerate() {
                    k[(i, j)] = *ci;
                    h[(i, j)] = xi * ci;
                }
                h[(j, j)] += 1.0;
            }
            Extended::Infinity => {
                k[(j, j)] = Complex64::new(1.0, 0.0);
                for (i, ci) in col.iter().enumerate() {
                    h[(i, j)] = *ci;
                }
            }
        }
        basis.push_column(out.vector)?;
    }
    Ok(Decomposition {
        basis,
        pencil: Pencil::new(h, k)?,
        poles: poles.to_vec(),
        start_norm: vnorm,
    })
}

/// Poles of the space: generalized eigenvalues of the lower square blocks.
pub fn read_poles(p: &Pencil) -> Result<Vec<Extended>, RkspaceError> {
    if p.size() == 0 {
        return Ok(Vec::new());
    }
    let (hs, ks) = p.lower();
    Ok(generalized_eigenvalues(&hs, &ks)?)
}

/// `||A V K - V H||_F / (||A|| ||V K||_F)`.
pub fn relative_residual(a: &Operator, basis: &DenseMatrix<Complex64>, p: &Pencil) -> Result<f64, RkspaceError> {
    let vk = basis.matmul(&p.k)?;
    let vh = basis.matmul(&p.h)?;
    let mut num = 0.0;
    for j in 0..vk.cols() {
        let avk = a.apply(vk.column(j))?;
        num += avk
            .iter()
            .zip(vh.column(j))
            .map(|(x, y)| (x - y).norm_sqr())
            .sum::<f64>();
    }
    let denom = a.spectral_radius() * vk.frobenius_norm();
    Ok(num.sqrt() / denom)
}

/// Result of moving a new starting vector into the first basis position.
#[derive(Clone, Debug)]
pub struct Rotation {
    pub pencil: Pencil,
    /// Unitary `Q` with `V_new = V Q` and `Q e1` parallel to `c`.
    pub q: DenseMatrix<Complex64>,
}

/// Householder reflector `I - 2 u u^H` mapping `e1` to a unimodular multiple of `c`.
fn reflector_to(c: &[Complex64]) -> DenseMatrix<Complex64> {
    let n = c.len();
    let mut p = DenseMatrix::<Complex64>::identity(n);
    let c0 = c[0];
    let phase = if c0.norm() == 0.0 {
        Complex64::new(1.0, 0.0)
    } else {
        c0 / c0.norm()
    };
    // u = (c + phase e1) / ||.|| gives P c = -phase e1, hence P e1 = -c / phase
    let mut u: Vec<Complex64> = c.to_vec();
    u[0] += phase;
    let un = norm_f64(&u);
    if un < 1e-15 {
        return p;
    }
    u.iter_mut().for_each(|x| *x /= un);
    for j in 0..n {
        for i in 0..n {
            p[(i, j)] -= 2.0 * u[i] * u[j].conj();
        }
    }
    p
}

/// Rotates the decomposition `A V K = V H` (pencil `n x (n-1)`) so that the
/// new first basis vector is `V c`, and restores upper Hessenberg form with
/// plane rotations acting on rows `2..n` and on columns.
pub fn rotate_starting_vector(p: &Pencil, c: &[Complex64]) -> Result<Rotation, RkspaceError> {
    let n = p.h.rows();
    if c.len() != n {
        return Err(RkspaceError::Shape(format!(
            "vector of length {} for a {n}-row pencil",
            c.len()
        )));
    }
    let cn = norm_f64(c);
    if (cn - 1.0).abs() > 1e-10 {
        return Err(RkspaceError::Shape(format!("rotation vector has norm {cn}")));
    }
    let q0 = reflector_to(c);
    let h1 = q0.adjoint().matmul(&p.h)?;
    let k1 = q0.adjoint().matmul(&p.k)?;
    let m = n - 1;
    if m == 0 {
        return Ok(Rotation {
            pencil: Pencil { h: h1, k: k1 },
            q: q0,
        });
    }
    let hs = h1.submatrix(1..n, 0..m);
    let ks = k1.submatrix(1..n, 0..m);
    let gs = generalized_schur(&hs, &ks)?;
    // left factor blkdiag(1, Q_s^H), right factor Z_s
    let mut h = DenseMatrix::<Complex64>::zeros(n, m);
    let mut k = DenseMatrix::<Complex64>::zeros(n, m);
    let top_h = DenseMatrix::from_fn(1, m, |_, j| h1[(0, j)]).matmul(&gs.z)?;
    let top_k = DenseMatrix::from_fn(1, m, |_, j| k1[(0, j)]).matmul(&gs.z)?;
    for j in 0..m {
        h[(0, j)] = top_h[(0, j)];
        k[(0, j)] = top_k[(0, j)];
        for i in 0..=j {
            h[(i + 1, j)] = gs.s[(i, j)];
            k[(i + 1, j)] = gs.t[(i, j)];
        }
    }
    let mut q = DenseMatrix::<Complex64>::zeros(n, n);
    for i in 0..n {
        q[(i, 0)] = q0[(i, 0)];
        for j in 0..m {
            let mut acc = Complex64::new(0.0, 0.0);
            for l in 0..m {
                acc += q0[(i, l + 1)] * gs.q[(l, j)];
            }
            q[(i, j + 1)] = acc;
        }
    }
    Ok(Rotation {
        pencil: Pencil::new(h, k)?,
        q,
    })
}

/// `max_j ||(I - V V^H) W e_j||` for orthonormal `V`, used to compare spans.
pub fn span_residual(v: &DenseMatrix<Complex64>, w: &DenseMatrix<Complex64>) -> f64 {
    (0..w.cols())
        .map(|j| {
            let col = w.column(j);
            let mut r = col.to_vec();
            for i in 0..v.cols() {
                let c = dot(v.column(i), col);
                r.iter_mut().zip(v.column(i)).for_each(|(x, q)| *x -= c * q);
            }
            norm_f64(&r)
        })
        .fold(0.0, f64::max)
}
