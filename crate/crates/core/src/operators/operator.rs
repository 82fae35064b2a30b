use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::dtn::{dtn_scalar, DtnSpec};
use super::OperatorError;
use crate::numerics::{symmetric_eigen, DenseMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    Neumann1d,
    Dirichlet1d,
    Kron2d,
    Diagonal,
}

/// Eigenpairs of the unscaled 1D second-difference matrix.
#[derive(Clone, Debug)]
struct Factor1d {
    m: usize,
    values: Vec<f64>,
    /// column-major `m x m`
    vectors: Vec<f64>,
}

impl Factor1d {
    fn new(m: usize, neumann: bool) -> Self {
        let mut l = vec![0.0; m * m];
        for i in 0..m {
            l[i * m + i] = 2.0;
            if i + 1 < m {
                l[i * m + i + 1] = -1.0;
                l[(i + 1) * m + i] = -1.0;
            }
        }
        if neumann {
            l[0] = 1.0;
            l[m * m - 1] = 1.0;
        }
        let (values, vectors) = symmetric_eigen(m, &l);
        Self { m, values, vectors }
    }

    /// `y = U^T x` for a strided slice of length `m`.
    fn forward(&self, x: &[Complex64], y: &mut [Complex64]) {
        let m = self.m;
        for (k, yk) in y.iter_mut().enumerate() {
            let col = &self.vectors[k * m..(k + 1) * m];
            let mut acc = Complex64::new(0.0, 0.0);
            for (u, xi) in col.iter().zip(x) {
                acc += xi * u;
            }
            *yk = acc;
        }
    }

    /// `x = U y`.
    fn backward(&self, y: &[Complex64], x: &mut [Complex64]) {
        let m = self.m;
        x.iter_mut().for_each(|xi| *xi = Complex64::new(0.0, 0.0));
        for (k, yk) in y.iter().enumerate() {
            let col = &self.vectors[k * m..(k + 1) * m];
            for (xi, u) in x.iter_mut().zip(col) {
                *xi += yk * u;
            }
        }
    }
}

/// Hermitian transverse operator with stored spectral decomposition.
///
/// Spectral coordinates are ordered by the 1D eigenvalue index; for
/// `Kron2d` the index `i + m j` belongs to the eigenvalue
/// `(mu_i + mu_j) / h^2 - k^2`.
#[derive(Clone, Debug)]
pub struct Operator {
    kind: OperatorKind,
    size: usize,
    h: f64,
    k_inf: f64,
    factor: Option<Factor1d>,
    eigenvalues: Vec<f64>,
}

/// Extreme negative and positive eigenvalues `a1 <= b1 < 0 < a2 <= b2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralIntervals {
    pub a1: f64,
    pub b1: f64,
    pub a2: f64,
    pub b2: f64,
}

/// `N x N` Laplacian-type operator. For `Kron2d`, `n` is the total size
/// and must be a perfect square. `Diagonal` operators are built with
/// [`Operator::diagonal`].
pub fn build_operator(kind: OperatorKind, n: usize, h: f64, k_inf: f64) -> Result<Operator, OperatorError> {
    if !(h.is_finite() && h > 0.0) || !k_inf.is_finite() {
        return Err(OperatorError::Shape(format!("invalid step {h} or wave number {k_inf}")));
    }
    let shift = k_inf * k_inf;
    let scale = 1.0 / (h * h);
    match kind {
        OperatorKind::Neumann1d | OperatorKind::Dirichlet1d => {
            if n < 2 {
                return Err(OperatorError::Shape(format!("operator size {n} < 2")));
            }
            let f = Factor1d::new(n, kind == OperatorKind::Neumann1d);
            let eigenvalues = f.values.iter().map(|mu| mu * scale - shift).collect();
            Ok(Operator {
                kind,
                size: n,
                h,
                k_inf,
                factor: Some(f),
                eigenvalues,
            })
        }
        OperatorKind::Kron2d => {
            let m = (n as f64).sqrt().round() as usize;
            if m * m != n || m < 2 {
                return Err(OperatorError::Shape(format!(
                    "kron2d size {n} is not a square of an integer >= 2"
                )));
            }
            let f = Factor1d::new(m, true);
            let mut eigenvalues = Vec::with_capacity(n);
            for j in 0..m {
                for i in 0..m {
                    eigenvalues.push((f.values[i] + f.values[j]) * scale - shift);
                }
            }
            Ok(Operator {
                kind,
                size: n,
                h,
                k_inf,
                factor: Some(f),
                eigenvalues,
            })
        }
        OperatorKind::Diagonal => Err(OperatorError::Shape(
            "diagonal operators take explicit eigenvalues, use Operator::diagonal".into(),
        )),
    }
}

impl Operator {
    pub fn diagonal(eigenvalues: Vec<f64>) -> Result<Self, OperatorError> {
        if eigenvalues.is_empty() {
            return Err(OperatorError::Shape("empty diagonal operator".into()));
        }
        if eigenvalues.iter().any(|x| !x.is_finite()) {
            return Err(OperatorError::Shape("non-finite diagonal entry".into()));
        }
        Ok(Self {
            kind: OperatorKind::Diagonal,
            size: eigenvalues.len(),
            h: 1.0,
            k_inf: 0.0,
            factor: None,
            eigenvalues,
        })
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn step(&self) -> f64 {
        self.h
    }

    pub fn k_inf(&self) -> f64 {
        self.k_inf
    }

    /// Eigenvalues in spectral-coordinate order.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn spectral_radius(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    fn check_len(&self, v: &[Complex64]) -> Result<(), OperatorError> {
        if v.len() != self.size {
            return Err(OperatorError::Shape(format!(
                "vector of length {} for operator of size {}",
                v.len(),
                self.size
            )));
        }
        Ok(())
    }

    /// `A v` through the finite-difference stencil (or the diagonal).
    pub fn apply(&self, v: &[Complex64]) -> Result<Vec<Complex64>, OperatorError> {
        self.check_len(v)?;
        let scale = 1.0 / (self.h * self.h);
        let shift = self.k_inf * self.k_inf;
        let neumann = self.kind != OperatorKind::Dirichlet1d;
        let stencil_1d = |x: &[Complex64], i: usize| -> Complex64 {
            let m = x.len();
            let mut acc = 2.0 * x[i];
            if i > 0 {
                acc -= x[i - 1];
            } else if neumann {
                acc -= x[i];
            }
            if i + 1 < m {
                acc -= x[i + 1];
            } else if neumann {
                acc -= x[i];
            }
            acc
        };
        Ok(match self.kind {
            OperatorKind::Diagonal => v.iter().zip(&self.eigenvalues).map(|(x, l)| x * l).collect(),
            OperatorKind::Neumann1d | OperatorKind::Dirichlet1d => (0..self.size)
                .map(|i| stencil_1d(v, i) * scale - v[i] * shift)
                .collect(),
            OperatorKind::Kron2d => {
                let m = self.factor.as_ref().map(|f| f.m).unwrap_or(0);
                let mut out = vec![Complex64::new(0.0, 0.0); self.size];
                let mut row = vec![Complex64::new(0.0, 0.0); m];
                for j in 0..m {
                    let col = &v[j * m..(j + 1) * m];
                    for i in 0..m {
                        out[i + m * j] = stencil_1d(col, i);
                    }
                }
                for i in 0..m {
                    for (j, r) in row.iter_mut().enumerate() {
                        *r = v[i + m * j];
                    }
                    for j in 0..m {
                        out[i + m * j] += stencil_1d(&row, j);
                    }
                }
                out.iter_mut().zip(v).for_each(|(o, x)| *o = *o * scale - x * shift);
                out
            }
        })
    }

    /// Coordinates in the eigenbasis, `Q^H v`.
    pub fn to_spectral(&self, v: &[Complex64]) -> Result<Vec<Complex64>, OperatorError> {
        self.check_len(v)?;
        Ok(self.transform(v, true))
    }

    /// Inverse of [`Operator::to_spectral`], `Q y`.
    pub fn from_spectral(&self, y: &[Complex64]) -> Result<Vec<Complex64>, OperatorError> {
        self.check_len(y)?;
        Ok(self.transform(y, false))
    }

    fn transform(&self, x: &[Complex64], forward: bool) -> Vec<Complex64> {
        let Some(f) = &self.factor else {
            return x.to_vec();
        };
        let apply = |src: &[Complex64], dst: &mut [Complex64]| {
            if forward {
                f.forward(src, dst)
            } else {
                f.backward(src, dst)
            }
        };
        let m = f.m;
        match self.kind {
            OperatorKind::Kron2d => {
                let mut tmp = vec![Complex64::new(0.0, 0.0); self.size];
                for j in 0..m {
                    apply(&x[j * m..(j + 1) * m], &mut tmp[j * m..(j + 1) * m]);
                }
                let mut out = vec![Complex64::new(0.0, 0.0); self.size];
                let mut src = vec![Complex64::new(0.0, 0.0); m];
                let mut dst = vec![Complex64::new(0.0, 0.0); m];
                for i in 0..m {
                    for j in 0..m {
                        src[j] = tmp[i + m * j];
                    }
                    apply(&src, &mut dst);
                    for j in 0..m {
                        out[i + m * j] = dst[j];
                    }
                }
                out
            }
            _ => {
                let mut out = vec![Complex64::new(0.0, 0.0); self.size];
                apply(x, &mut out);
                out
            }
        }
    }

    /// `g(A) v` for a scalar function given by its values at the eigenvalues.
    pub fn apply_spectral(&self, values: &[Complex64], v: &[Complex64]) -> Result<Vec<Complex64>, OperatorError> {
        if values.len() != self.size {
            return Err(OperatorError::Shape("spectral values of wrong length".into()));
        }
        let mut y = self.to_spectral(v)?;
        y.iter_mut().zip(values).for_each(|(yi, g)| *yi *= g);
        self.from_spectral(&y)
    }

    /// Tabulates the DtN function of `spec` on the spectrum.
    pub fn function(&self, spec: &DtnSpec) -> Result<SpectralFunction<'_>, OperatorError> {
        spec.validate()?;
        let values = self
            .eigenvalues
            .iter()
            .map(|&l| dtn_scalar(spec, Complex64::new(l, 0.0)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(SpectralFunction { op: self, values })
    }

    /// `(A - xi I)^{-1} rhs`.
    pub fn solve_shifted(&self, xi: Complex64, rhs: &[Complex64]) -> Result<Vec<Complex64>, OperatorError> {
        self.check_len(rhs)?;
        let tol = 1e-12 * self.spectral_radius().max(f64::MIN_POSITIVE);
        let mut inv = Vec::with_capacity(self.size);
        for &l in &self.eigenvalues {
            let d = Complex64::new(l, 0.0) - xi;
            if d.norm() < tol {
                return Err(OperatorError::Collision {
                    eigenvalue: l,
                    shift: xi,
                });
            }
            inv.push(d.inv());
        }
        self.apply_spectral(&inv, rhs)
    }

    pub fn spectral_intervals(&self) -> Result<SpectralIntervals, OperatorError> {
        let neg = self.eigenvalues.iter().copied().filter(|&x| x < 0.0);
        let pos = self.eigenvalues.iter().copied().filter(|&x| x > 0.0);
        let (a1, b1) = neg.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
        let (a2, b2) = pos.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
        if !a1.is_finite() || !a2.is_finite() {
            return Err(OperatorError::Semidefinite);
        }
        Ok(SpectralIntervals { a1, b1, a2, b2 })
    }

    /// Dense matrix of the operator (small sizes only).
    pub fn dense(&self) -> DenseMatrix<Complex64> {
        let n = self.size;
        let mut cols = Vec::with_capacity(n);
        for j in 0..n {
            let mut e = vec![Complex64::new(0.0, 0.0); n];
            e[j] = Complex64::new(1.0, 0.0);
            cols.push(self.apply(&e).expect("unit vector has operator length"));
        }
        DenseMatrix::from_columns(n, &cols).expect("columns have operator length")
    }
}

/// A scalar function tabulated on an operator's spectrum.
#[derive(Clone, Debug)]
pub struct SpectralFunction<'a> {
    op: &'a Operator,
    values: Vec<Complex64>,
}

impl<'a> SpectralFunction<'a> {
    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn operator(&self) -> &'a Operator {
        self.op
    }

    pub fn apply(&self, v: &[Complex64]) -> Result<Vec<Complex64>, OperatorError> {
        self.op.apply_spectral(&self.values, v)
    }
}

/// `f(A) v` for the DtN function of `spec`.
pub fn apply_function(a: &Operator, spec: &DtnSpec, v: &[Complex64]) -> Result<Vec<Complex64>, OperatorError> {
    a.function(spec)?.apply(v)
}

pub fn solve_shifted(a: &Operator, xi: Complex64, rhs: &[Complex64]) -> Result<Vec<Complex64>, OperatorError> {
    a.solve_shifted(xi, rhs)
}

pub fn spectral_intervals(a: &Operator) -> Result<SpectralIntervals, OperatorError> {
    a.spectral_intervals()
}
