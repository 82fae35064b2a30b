//! Complex QZ iteration for small dense pencils.
//!
//! `generalized_schur` computes unitary `Q`, `Z` with `Q^H A Z = S` and
//! `Q^H B Z = T` upper triangular. The reduction follows the classical
//! Moler-Stewart scheme: triangularize `B`, reduce `A` to Hessenberg form with
//! Givens rotations, then run single-shift implicit QZ sweeps. Zero diagonal
//! entries of `T` are chased to the bottom of the active block and deflated as
//! infinite eigenvalues.

use std::ops::Range;

use num_complex::Complex64;

use super::{DenseMatrix, NumericsError, Scalar};

/// A point of the extended complex plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Extended {
    Finite(Complex64),
    Infinity,
}

impl Extended {
    pub fn is_finite(&self) -> bool {
        matches!(self, Extended::Finite(_))
    }

    pub fn finite(&self) -> Option<Complex64> {
        match self {
            Extended::Finite(z) => Some(*z),
            Extended::Infinity => None,
        }
    }
}

impl std::fmt::Display for Extended {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Extended::Finite(z) => write!(f, "{z}"),
            Extended::Infinity => write!(f, "inf"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct GeneralizedSchur<T> {
    pub s: DenseMatrix<T>,
    pub t: DenseMatrix<T>,
    pub q: DenseMatrix<T>,
    pub z: DenseMatrix<T>,
}

impl<T: Scalar> GeneralizedSchur<T> {
    /// Diagonal pairs `(s_ii, t_ii)`.
    pub fn pairs(&self) -> Vec<(T, T)> {
        (0..self.s.rows())
            .map(|i| (self.s[(i, i)].clone(), self.t[(i, i)].clone()))
            .collect()
    }
}

/// Plane rotation `[c s; -conj(s) c]` with real `c`.
#[derive(Clone, Debug)]
struct Rot<T> {
    c: T,
    s: T,
}

impl<T: Scalar> Rot<T> {
    /// Rotation mapping `(f, g)` to `(r, 0)`.
    fn zeroing(f: &T, g: &T) -> Self {
        let ctx = f.ctx();
        if g.is_zero() {
            return Self {
                c: T::one(ctx),
                s: T::zero(ctx),
            };
        }
        if f.is_zero() {
            return Self {
                c: T::zero(ctx),
                s: g.conj() / g.modulus(),
            };
        }
        let fa = f.modulus();
        let ga = g.modulus();
        let nrm = (fa.clone() * fa.clone() + ga.clone() * ga).sqrt();
        Self {
            c: fa.clone() / nrm.clone(),
            s: (f.clone() / fa) * g.conj() / nrm,
        }
    }

    fn neg(&self) -> Self {
        Self {
            c: self.c.clone(),
            s: -self.s.clone(),
        }
    }
}

/// Left rotation of rows `i`, `k` over the given columns.
fn rot_rows<T: Scalar>(m: &mut DenseMatrix<T>, i: usize, k: usize, cols: Range<usize>, r: &Rot<T>) {
    let sc = r.s.conj();
    for j in cols {
        let x = m[(i, j)].clone();
        let y = m[(k, j)].clone();
        m[(i, j)] = r.c.clone() * x.clone() + r.s.clone() * y.clone();
        m[(k, j)] = r.c.clone() * y - sc.clone() * x;
    }
}

/// Right rotation of columns `i`, `k` over the given rows.
fn rot_cols<T: Scalar>(m: &mut DenseMatrix<T>, i: usize, k: usize, rows: Range<usize>, r: &Rot<T>) {
    let sc = r.s.conj();
    for row in rows {
        let x = m[(row, i)].clone();
        let y = m[(row, k)].clone();
        m[(row, i)] = r.c.clone() * x.clone() - sc.clone() * y.clone();
        m[(row, k)] = r.s.clone() * x + r.c.clone() * y;
    }
}

struct Work<T> {
    s: DenseMatrix<T>,
    t: DenseMatrix<T>,
    q: DenseMatrix<T>,
    z: DenseMatrix<T>,
    n: usize,
}

impl<T: Scalar> Work<T> {
    /// Applies a left rotation on rows `(i, i + 1)` of `S` and `T`.
    fn left(&mut self, i: usize, s_cols: Range<usize>, t_cols: Range<usize>, r: &Rot<T>) {
        rot_rows(&mut self.s, i, i + 1, s_cols, r);
        rot_rows(&mut self.t, i, i + 1, t_cols, r);
        let n = self.n;
        rot_cols(&mut self.q, i, i + 1, 0..n, &r.neg());
    }

    /// Applies a right rotation on columns `(i, i + 1)` of `S` and `T`.
    fn right(&mut self, i: usize, s_rows: Range<usize>, t_rows: Range<usize>, r: &Rot<T>) {
        rot_cols(&mut self.s, i, i + 1, s_rows, r);
        rot_cols(&mut self.t, i, i + 1, t_rows, r);
        let n = self.n;
        rot_cols(&mut self.z, i, i + 1, 0..n, r);
    }

    /// Column rotation that annihilates `m[row, i]` against `m[row, i + 1]`.
    fn right_zeroing(m: &DenseMatrix<T>, row: usize, i: usize) -> Rot<T> {
        Rot::zeroing(&m[(row, i + 1)], &m[(row, i)])
    }
}

pub fn generalized_schur<T: Scalar>(
    a: &DenseMatrix<T>,
    b: &DenseMatrix<T>,
) -> Result<GeneralizedSchur<T>, NumericsError> {
    if !a.is_square() || !b.is_square() || a.rows() != b.rows() {
        return Err(NumericsError::Shape(format!(
            "pencil of shapes {}x{} and {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let n = a.rows();
    let Some(ctx) = a.ctx() else {
        return Ok(GeneralizedSchur {
            s: a.clone(),
            t: b.clone(),
            q: a.clone(),
            z: a.clone(),
        });
    };
    if !a.is_finite() || !b.is_finite() {
        return Err(NumericsError::NonFinite("pencil entries"));
    }
    let zero = T::zero(ctx);
    let mut w = Work {
        s: a.clone(),
        t: b.clone(),
        q: DenseMatrix::identity_in(n, ctx),
        z: DenseMatrix::identity_in(n, ctx),
        n,
    };

    // B -> triangular
    for j in 0..n {
        for i in ((j + 1)..n).rev() {
            if w.t[(i, j)].is_zero() {
                continue;
            }
            let r = Rot::zeroing(&w.t[(i - 1, j)], &w.t[(i, j)]);
            w.left(i - 1, 0..n, j..n, &r);
            w.t[(i, j)] = zero.clone();
        }
    }

    // A -> Hessenberg, keeping B triangular
    for j in 0..n.saturating_sub(2) {
        for i in ((j + 2)..n).rev() {
            if w.s[(i, j)].is_zero() {
                continue;
            }
            let r = Rot::zeroing(&w.s[(i - 1, j)], &w.s[(i, j)]);
            w.left(i - 1, j..n, (i - 1)..n, &r);
            w.s[(i, j)] = zero.clone();
            let r = Work::right_zeroing(&w.t, i, i - 1);
            w.right(i - 1, 0..n, 0..(i + 1), &r);
            w.t[(i, i - 1)] = zero.clone();
        }
    }

    let eps = T::epsilon(ctx);
    let anorm = w.s.frobenius_norm();
    let bnorm = w.t.frobenius_norm();
    let max_iter = 100 * n.max(1);
    let mut total = 0usize;
    let mut since_deflation = 0usize;
    let mut ihi = n.saturating_sub(1);
    while ihi > 0 {
        let mut ilo = 0;
        for k in (1..=ihi).rev() {
            let sub = w.s[(k, k - 1)].abs_f64();
            let mut scale = w.s[(k - 1, k - 1)].abs_f64() + w.s[(k, k)].abs_f64();
            if scale == 0.0 {
                scale = anorm;
            }
            if sub <= eps * scale {
                w.s[(k, k - 1)] = zero.clone();
                ilo = k;
                break;
            }
        }
        if ilo == ihi {
            ihi -= 1;
            since_deflation = 0;
            continue;
        }

        if let Some(j) = (ilo..=ihi).find(|&k| w.t[(k, k)].abs_f64() <= eps * bnorm) {
            w.t[(j, j)] = zero.clone();
            chase_infinite(&mut w, ilo, j, ihi);
            ihi -= 1;
            since_deflation = 0;
            continue;
        }

        total += 1;
        since_deflation += 1;
        if total > max_iter {
            return Err(NumericsError::NoConvergence("QZ iteration"));
        }
        let shift = if since_deflation.is_multiple_of(10) {
            exceptional_shift(&w, ihi)
        } else {
            wilkinson_shift(&w, ihi)
        };
        qz_sweep(&mut w, ilo, ihi, &shift);
    }

    Ok(GeneralizedSchur {
        s: w.s,
        t: w.t,
        q: w.q,
        z: w.z,
    })
}

fn chase_infinite<T: Scalar>(w: &mut Work<T>, ilo: usize, j: usize, ihi: usize) {
    let n = w.n;
    let zero = T::zero(w.s[(0, 0)].ctx());
    for jch in j..ihi {
        let r = Rot::zeroing(&w.t[(jch, jch + 1)], &w.t[(jch + 1, jch + 1)]);
        let lo = if jch > ilo { jch - 1 } else { jch };
        w.left(jch, lo..n, (jch + 1)..n, &r);
        w.t[(jch + 1, jch + 1)] = zero.clone();
        if jch > ilo {
            let r = Work::right_zeroing(&w.s, jch + 1, jch - 1);
            w.right(jch - 1, 0..(jch + 2), 0..jch, &r);
            w.s[(jch + 1, jch - 1)] = zero.clone();
        }
    }
    if ihi > ilo {
        let r = Work::right_zeroing(&w.s, ihi, ihi - 1);
        w.right(ihi - 1, 0..(ihi + 1), 0..ihi, &r);
        w.s[(ihi, ihi - 1)] = zero;
    }
}

fn wilkinson_shift<T: Scalar>(w: &Work<T>, ihi: usize) -> T {
    let k = ihi - 1;
    let (a11, a12, a21, a22) = (
        w.s[(k, k)].clone(),
        w.s[(k, ihi)].clone(),
        w.s[(ihi, k)].clone(),
        w.s[(ihi, ihi)].clone(),
    );
    let (b11, b12, b22) = (w.t[(k, k)].clone(), w.t[(k, ihi)].clone(), w.t[(ihi, ihi)].clone());
    let ctx = a11.ctx();
    let alpha = b11.clone() * b22.clone();
    let beta = a11.clone() * b22.clone() + a22.clone() * b11 - a21.clone() * b12;
    let gamma = a11 * a22.clone() - a12 * a21;
    let two = T::from_f64(2.0, ctx);
    let four = T::from_f64(4.0, ctx);
    let disc = (beta.clone() * beta.clone() - four * alpha.clone() * gamma).sqrt();
    let target = a22 / b22;
    let l1 = (beta.clone() + disc.clone()) / (two.clone() * alpha.clone());
    let l2 = (beta - disc) / (two * alpha);
    if (l1.clone() - target.clone()).abs_f64() <= (l2.clone() - target).abs_f64() {
        l1
    } else {
        l2
    }
}

fn exceptional_shift<T: Scalar>(w: &Work<T>, ihi: usize) -> T {
    let ctx = w.s[(0, 0)].ctx();
    let base = w.s[(ihi, ihi)].clone() / w.t[(ihi, ihi)].clone();
    let kick = w.s[(ihi, ihi - 1)].clone() / w.t[(ihi - 1, ihi - 1)].clone();
    base + kick * T::from_c64(Complex64::new(0.75, 0.43), ctx)
}

fn qz_sweep<T: Scalar>(w: &mut Work<T>, ilo: usize, ihi: usize, shift: &T) {
    let n = w.n;
    let zero = T::zero(shift.ctx());
    let x = w.s[(ilo, ilo)].clone() - shift.clone() * w.t[(ilo, ilo)].clone();
    let y = w.s[(ilo + 1, ilo)].clone();
    let r = Rot::zeroing(&x, &y);
    w.left(ilo, ilo..n, ilo..n, &r);
    for k in ilo..ihi {
        let r = Work::right_zeroing(&w.t, k + 1, k);
        let s_end = (k + 3).min(ihi + 1);
        w.right(k, 0..s_end, 0..(k + 2), &r);
        w.t[(k + 1, k)] = zero.clone();
        if k + 2 <= ihi {
            let r = Rot::zeroing(&w.s[(k + 1, k)], &w.s[(k + 2, k)]);
            w.left(k + 1, k..n, (k + 1)..n, &r);
            w.s[(k + 2, k)] = zero.clone();
        }
    }
}

/// Relative size below which a diagonal entry of the triangular pair counts as zero.
fn pair_tolerance(n: usize, eps: f64) -> f64 {
    100.0 * (n.max(1) as f64) * eps
}

/// Generalized eigenvalues of the square pencil `(hs, ks)`, i.e. the roots of
/// `det(hs - t ks)`, with infinite eigenvalues reported as [`Extended::Infinity`].
pub fn generalized_eigenvalues<T: Scalar>(
    hs: &DenseMatrix<T>,
    ks: &DenseMatrix<T>,
) -> Result<Vec<Extended>, NumericsError> {
    let schur = generalized_schur(hs, ks)?;
    let n = hs.rows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let ctx = hs[(0, 0)].ctx();
    let tol = pair_tolerance(n, T::epsilon(ctx));
    let hn = hs.frobenius_norm();
    let kn = ks.frobenius_norm();
    classify_pairs(&schur.pairs(), hn, kn, tol)
}

pub(crate) fn classify_pairs<T: Scalar>(
    pairs: &[(T, T)],
    hnorm: f64,
    knorm: f64,
    tol: f64,
) -> Result<Vec<Extended>, NumericsError> {
    pairs
        .iter()
        .map(|(alpha, beta)| {
            let (a, b) = (alpha.abs_f64(), beta.abs_f64());
            let a_small = a <= tol * hnorm;
            let b_small = b <= tol * knorm;
            if a_small && b_small {
                Err(NumericsError::SingularPencil)
            } else if b_small {
                Ok(Extended::Infinity)
            } else {
                Ok(Extended::Finite((alpha.clone() / beta.clone()).to_c64()))
            }
        })
        .collect()
}
