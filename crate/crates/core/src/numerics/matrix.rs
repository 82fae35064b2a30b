use std::ops::{Index, IndexMut, Range};

use num_complex::Complex64;

use super::{NumericsError, Scalar};

/// Column-major dense matrix over a [`Scalar`].
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> DenseMatrix<T> {
    pub fn zeros_in(rows: usize, cols: usize, ctx: T::Ctx) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(ctx); rows * cols],
        }
    }

    pub fn identity_in(n: usize, ctx: T::Ctx) -> Self {
        let mut m = Self::zeros_in(n, n, ctx);
        for i in 0..n {
            m[(i, i)] = T::one(ctx);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for j in 0..cols {
            for i in 0..rows {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from equally long columns.
    pub fn from_columns(rows: usize, columns: &[Vec<T>]) -> Result<Self, NumericsError> {
        let mut data = Vec::with_capacity(rows * columns.len());
        for col in columns {
            if col.len() != rows {
                return Err(NumericsError::Shape(format!(
                    "column of length {} in a matrix with {rows} rows",
                    col.len()
                )));
            }
            data.extend(col.iter().cloned());
        }
        Ok(Self {
            rows,
            cols: columns.len(),
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn column(&self, j: usize) -> &[T] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn column_mut(&mut self, j: usize) -> &mut [T] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn push_column(&mut self, col: Vec<T>) -> Result<(), NumericsError> {
        if self.cols > 0 && col.len() != self.rows {
            return Err(NumericsError::Shape(format!(
                "pushing column of length {} onto {} rows",
                col.len(),
                self.rows
            )));
        }
        if self.cols == 0 {
            self.rows = col.len();
        }
        self.data.extend(col);
        self.cols += 1;
        Ok(())
    }

    pub fn row(&self, i: usize) -> Vec<T> {
        (0..self.cols).map(|j| self[(i, j)].clone()).collect()
    }

    pub fn submatrix(&self, rows: Range<usize>, cols: Range<usize>) -> Self {
        Self::from_fn(rows.len(), cols.len(), |i, j| {
            self[(rows.start + i, cols.start + j)].clone()
        })
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].clone())
    }

    pub fn matmul(&self, rhs: &Self) -> Result<Self, NumericsError> {
        if self.cols != rhs.rows {
            return Err(NumericsError::Shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let ctx = self.context_or(rhs);
        let mut out = Self::zeros_in(self.rows, rhs.cols, ctx);
        for j in 0..rhs.cols {
            for k in 0..self.cols {
                let b = &rhs[(k, j)];
                if b.is_zero() {
                    continue;
                }
                for i in 0..self.rows {
                    let prod = self[(i, k)].clone() * b.clone();
                    let acc = out[(i, j)].clone();
                    out[(i, j)] = acc + prod;
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, x: &[T]) -> Result<Vec<T>, NumericsError> {
        if x.len() != self.cols {
            return Err(NumericsError::Shape(format!(
                "matrix with {} columns applied to vector of length {}",
                self.cols,
                x.len()
            )));
        }
        let ctx = match (self.data.first(), x.first()) {
            (Some(a), _) => a.ctx(),
            (None, Some(b)) => b.ctx(),
            (None, None) => return Ok(Vec::new()),
        };
        let mut out = vec![T::zero(ctx); self.rows];
        for (j, xj) in x.iter().enumerate() {
            if xj.is_zero() {
                continue;
            }
            for (i, o) in out.iter_mut().enumerate() {
                *o = o.clone() + self[(i, j)].clone() * xj.clone();
            }
        }
        Ok(out)
    }

    /// `self^H x`.
    pub fn adjoint_matvec(&self, x: &[T]) -> Result<Vec<T>, NumericsError> {
        if x.len() != self.rows {
            return Err(NumericsError::Shape(format!(
                "adjoint of matrix with {} rows applied to vector of length {}",
                self.rows,
                x.len()
            )));
        }
        Ok((0..self.cols).map(|j| dot(self.column(j), x)).collect())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data
            .iter()
            .map(|z| {
                let a = z.abs_f64();
                a * a
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(Scalar::is_finite)
    }

    /// Rounds or lifts every entry into another scalar backend.
    pub fn convert<U: Scalar>(&self, ctx: U::Ctx) -> DenseMatrix<U> {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| U::from_c64(z.to_c64(), ctx)).collect(),
        }
    }

    pub fn to_c64(&self) -> DenseMatrix<Complex64> {
        self.convert(())
    }

    fn context_or(&self, other: &Self) -> T::Ctx {
        self.data
            .first()
            .or(other.data.first())
            .map(Scalar::ctx)
            .expect("context requested from two empty matrices")
    }

    pub(crate) fn ctx(&self) -> Option<T::Ctx> {
        self.data.first().map(Scalar::ctx)
    }
}

impl<T: Scalar> DenseMatrix<T>
where
    T::Ctx: Default,
{
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::zeros_in(rows, cols, T::Ctx::default())
    }

    pub fn identity(n: usize) -> Self {
        Self::identity_in(n, T::Ctx::default())
    }
}

impl DenseMatrix<Complex64> {
    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, d) in diag.iter().enumerate() {
            m[(i, i)] = Complex64::new(*d, 0.0);
        }
        m
    }

    /// Row-major construction from real entries, mostly for tests.
    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let ncols = rows.first().map_or(0, |r| r.len());
        Self::from_fn(rows.len(), ncols, |i, j| Complex64::new(rows[i][j], 0.0))
    }
}

impl<T> Index<(usize, usize)> for DenseMatrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[j * self.rows + i]
    }
}

impl<T> IndexMut<(usize, usize)> for DenseMatrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[j * self.rows + i]
    }
}

/// `a^H b`.
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut it = a.iter().zip(b);
    let Some((x, y)) = it.next() else {
        panic!("dot product of empty vectors has no precision context");
    };
    let mut acc = x.conj() * y.clone();
    for (x, y) in it {
        acc = acc + x.conj() * y.clone();
    }
    acc
}

/// Euclidean norm as a real-valued scalar.
pub fn norm<T: Scalar>(v: &[T]) -> T {
    dot(v, v).modulus().sqrt()
}

pub fn norm_f64<T: Scalar>(v: &[T]) -> f64 {
    v.iter()
        .map(|z| {
            let a = z.abs_f64();
            a * a
        })
        .sum::<f64>()
        .sqrt()
}

/// `y <- y + alpha x`.
pub fn axpy<T: Scalar>(alpha: &T, x: &[T], y: &mut [T]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi = yi.clone() + alpha.clone() * xi.clone();
    }
}

pub fn scale<T: Scalar>(alpha: &T, x: &mut [T]) {
    for xi in x.iter_mut() {
        *xi = alpha.clone() * xi.clone();
    }
}

/// LU factorization with partial pivoting, `P A = L U`.
#[derive(Clone, Debug)]
pub struct Lu<T> {
    lu: DenseMatrix<T>,
    perm: Vec<usize>,
}

impl<T: Scalar> Lu<T> {
    pub fn factor(a: &DenseMatrix<T>) -> Result<Self, NumericsError> {
        if !a.is_square() {
            return Err(NumericsError::Shape(format!(
                "LU of a {}x{} matrix",
                a.rows(),
                a.cols()
            )));
        }
        let n = a.rows();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.frobenius_norm();
        let ctx = match a.ctx() {
            Some(c) => c,
            None => return Ok(Self { lu, perm }),
        };
        let tiny = T::epsilon(ctx) * scale * 1e-3;
        for k in 0..n {
            let (p, pmax) =
                (k..n)
                    .map(|i| (i, lu[(i, k)].abs_f64()))
                    .fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if pmax <= tiny || pmax == 0.0 {
                return Err(NumericsError::Singular { pivot: k });
            }
            if p != k {
                perm.swap(p, k);
                for j in 0..n {
                    let tmp = lu[(k, j)].clone();
                    lu[(k, j)] = lu[(p, j)].clone();
                    lu[(p, j)] = tmp;
                }
            }
            let piv = lu[(k, k)].clone();
            for i in (k + 1)..n {
                let l = lu[(i, k)].clone() / piv.clone();
                if !l.is_zero() {
                    for j in (k + 1)..n {
                        let upd = lu[(i, j)].clone() - l.clone() * lu[(k, j)].clone();
                        lu[(i, j)] = upd;
                    }
                }
                lu[(i, k)] = l;
            }
        }
        Ok(Self { lu, perm })
    }

    pub fn solve_vec(&self, b: &[T]) -> Result<Vec<T>, NumericsError> {
        let n = self.lu.rows();
        if b.len() != n {
            return Err(NumericsError::Shape(format!(
                "rhs of length {} for a system of size {n}",
                b.len()
            )));
        }
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p].clone()).collect();
        for i in 0..n {
            for k in 0..i {
                x[i] = x[i].clone() - self.lu[(i, k)].clone() * x[k].clone();
            }
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                x[i] = x[i].clone() - self.lu[(i, k)].clone() * x[k].clone();
            }
            x[i] = x[i].clone() / self.lu[(i, i)].clone();
        }
        Ok(x)
    }

    pub fn solve(&self, b: &DenseMatrix<T>) -> Result<DenseMatrix<T>, NumericsError> {
        let cols: Result<Vec<_>, _> = (0..b.cols()).map(|j| self.solve_vec(b.column(j))).collect();
        DenseMatrix::from_columns(b.rows(), &cols?)
    }

    pub fn determinant(&self) -> T {
        let n = self.lu.rows();
        let ctx = self.lu.ctx().expect("determinant of an empty factorization");
        let mut det = T::one(ctx);
        for i in 0..n {
            det = det * self.lu[(i, i)].clone();
        }
        let mut visited = vec![false; n];
        let mut odd = false;
        for start in 0..n {
            if visited[start] {
                continue;
            }
            let mut len = 0;
            let mut i = start;
            while !visited[i] {
                visited[i] = true;
                i = self.perm[i];
                len += 1;
            }
            if len % 2 == 0 {
                odd = !odd;
            }
        }
        if odd {
            -det
        } else {
            det
        }
    }
}

pub fn inverse<T: Scalar>(a: &DenseMatrix<T>) -> Result<DenseMatrix<T>, NumericsError> {
    let lu = Lu::factor(a)?;
    let ctx = a
        .ctx()
        .ok_or_else(|| NumericsError::Shape("inverse of an empty matrix".into()))?;
    lu.solve(&DenseMatrix::identity_in(a.rows(), ctx))
}
