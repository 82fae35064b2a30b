//! Conversion of an [`Rkfun`] into continued-fraction form, i.e. a complex
//! three-point finite-difference grid, and the solution of that scheme.
//!
//! The grid `(h_1..h_n, hhat_0..hhat_{n-1})` represents
//!
//! ```text
//! r(l) = hhat_0 l + 1/(h_1 + 1/(hhat_1 l + 1/(h_2 + ... + 1/(hhat_{n-1} l + 1/h_n))))
//! ```
//!
//! In pencil form the grid reads `l xi^T Kt = xi^T Ht` with the basis
//! `xi = (r, 1, u_1, .., u_{n-1})`, column 0 of `Ht` equal to
//! `(1, -1/h_1, 1/h_1)`, column `j` holding `(1/h_j, -1/h_j - 1/h_{j+1}, 1/h_{j+1})`
//! in rows `j..j+2`, and `Kt[j+1, j] = hhat_j`. The conversion transforms
//! the Rkfun pencil into this shape with basis changes that keep the first
//! two basis functions fixed.

use std::io::Write;

use num_complex::Complex64;
use serde::Serialize;

use crate::numerics::{inverse, two_sided_lanczos, DenseMatrix, ExtComplex, NumericsError, Precision, Scalar};
use crate::operators::{Operator, OperatorError, DEFAULT_POLE_THRESHOLD};
use crate::rkfit::Rkfun;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GridgenError {
    /// Biorthogonalization failed; refitting with another training vector usually helps.
    #[error("serious Lanczos breakdown at step {step}; retry with another vector")]
    SeriousBreakdown { step: usize },
    #[error("pivot H[0,0] vanishes after the column elimination step")]
    ZeroPivot,
    #[error("conversion produced a zero or non-finite grid step")]
    DegenerateStep,
    #[error("evaluation at or near a pole (lambda = {lambda})")]
    NearPole { lambda: Complex64 },
    #[error("finite-difference system is singular at eigenvalue {lambda}")]
    SingularSystem { lambda: f64 },
    #[error("shape error: {0}")]
    Shape(String),
    #[error(transparent)]
    Numerics(NumericsError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<NumericsError> for GridgenError {
    fn from(e: NumericsError) -> Self {
        match e {
            NumericsError::SeriousBreakdown { step, .. } => GridgenError::SeriousBreakdown { step },
            other => GridgenError::Numerics(other),
        }
    }
}

impl GridgenError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, GridgenError::SeriousBreakdown { .. })
    }
}

/// Complex primal steps `h_1..h_n` and dual steps `hhat_0..hhat_{n-1}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FdGrid {
    pub primal: Vec<Complex64>,
    pub dual: Vec<Complex64>,
}

impl FdGrid {
    pub fn new(primal: Vec<Complex64>, dual: Vec<Complex64>) -> Result<Self, GridgenError> {
        if primal.len() != dual.len() || primal.is_empty() {
            return Err(GridgenError::Shape(format!(
                "{} primal and {} dual steps",
                primal.len(),
                dual.len()
            )));
        }
        if primal
            .iter()
            .chain(&dual)
            .any(|z| !(z.re.is_finite() && z.im.is_finite()) || z.norm() == 0.0)
        {
            return Err(GridgenError::DegenerateStep);
        }
        Ok(Self { primal, dual })
    }

    pub fn len(&self) -> usize {
        self.primal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primal.is_empty()
    }

    /// CSV with header `j,re_h,im_h,re_hhat,im_hhat`; row `j` holds `h_j` and `hhat_{j-1}`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), GridgenError> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| GridgenError::Io(e.to_string());
        w.write_record(["j", "re_h", "im_h", "re_hhat", "im_hhat"])
            .map_err(io)?;
        for (j, (h, hh)) in self.primal.iter().zip(&self.dual).enumerate() {
            w.write_record(&[
                (j + 1).to_string(),
                format!("{:e}", h.re),
                format!("{:e}", h.im),
                format!("{:e}", hh.re),
                format!("{:e}", hh.im),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| GridgenError::Io(e.to_string()))
    }
}

type ExtMatrix = DenseMatrix<ExtComplex>;

/// Intermediate pencils of the conversion, in extended precision.
#[derive(Clone, Debug)]
pub struct ConversionTrace {
    pub precision: Precision,
    /// Pencils `(H, K)` after steps 0 to 6.
    pub snapshots: Vec<(ExtMatrix, ExtMatrix)>,
    /// Indices of the unit vectors completing the step-0 basis.
    pub free_columns: Vec<usize>,
    /// `|K[0,0]|` relative to `||K||` before it is set to zero in step 2.
    pub k00_residual: f64,
    /// Pencil entries after step 5 that feed the scaling recurrences.
    pub eta: ExtMatrix,
    /// Left scalings `l_1..l_{n+1}`.
    pub ell: Vec<ExtComplex>,
    /// Right scalings `rho_1..rho_n`.
    pub rho: Vec<ExtComplex>,
    /// Steps in full precision.
    pub primal: Vec<ExtComplex>,
    pub dual: Vec<ExtComplex>,
}

impl ConversionTrace {
    /// Largest entry outside the zero pattern expected after `step`,
    /// relative to the pencil norm.
    pub fn pattern_residual(&self, step: usize) -> f64 {
        let (h, k) = &self.snapshots[step];
        let n = h.cols();
        let scale = h.frobenius_norm() + k.frobenius_norm();
        let mut worst: f64 = 0.0;
        let dev = |m: &ExtMatrix, i: usize, j: usize, v: f64| (m[(i, j)].to_c64() - v).norm();
        for j in 0..n {
            for i in 0..=n {
                // step 3 fills K's second row, step 4 clears it again
                if i >= 1 && (1..=5).contains(&step) && !(step == 3 && i == 1) {
                    let want = if i == j + 1 { 1.0 } else { 0.0 };
                    worst = worst.max(dev(k, i, j, want));
                }
                if (2..=5).contains(&step) && i == 0 {
                    worst = worst.max(dev(k, 0, j, 0.0));
                }
                if step >= 3 && i == 0 && j > 0 {
                    worst = worst.max(dev(h, 0, j, 0.0));
                }
                // rows 1..n of H are tridiagonal in block coordinates
                if step >= 5 && i >= 1 && (i < j || i > j + 2) {
                    worst = worst.max(dev(h, i, j, 0.0));
                }
                if step == 6 && i != j + 1 {
                    worst = worst.max(dev(k, i, j, 0.0));
                }
            }
        }
        worst / scale
    }
}

#[derive(Clone, Debug)]
pub struct ConversionOptions {
    pub digits: u32,
    /// Relative biorthogonality threshold of the Lanczos step.
    pub lanczos_tol: f64,
}

impl Default for ConversionOptions {
    fn default() -> Self {
        Self {
            digits: 40,
            lanczos_tol: 1e-30,
        }
    }
}

fn lift(m: &DenseMatrix<Complex64>, prec: Precision) -> ExtMatrix {
    m.convert::<ExtComplex>(prec)
}

fn add_row_multiple(m: &mut ExtMatrix, target: usize, source: usize, alpha: &ExtComplex) {
    for j in 0..m.cols() {
        let upd = m[(target, j)].clone() - alpha.clone() * m[(source, j)].clone();
        m[(target, j)] = upd;
    }
}

fn add_col_multiple(m: &mut ExtMatrix, target: usize, source: usize, alpha: &ExtComplex) {
    for i in 0..m.rows() {
        let upd = m[(i, target)].clone() - alpha.clone() * m[(i, source)].clone();
        m[(i, target)] = upd;
    }
}

/// Converts an [`Rkfun`] into grid form with default options.
pub fn to_contfrac(r: &Rkfun) -> Result<(FdGrid, ConversionTrace), GridgenError> {
    to_contfrac_with(r, &ConversionOptions::default())
}

pub fn to_contfrac_with(r: &Rkfun, opts: &ConversionOptions) -> Result<(FdGrid, ConversionTrace), GridgenError> {
    let prec = Precision::from_digits(opts.digits);
    let inv_norm = ExtComplex::from_f64(1.0 / r.start_norm, prec);
    let coeffs: Vec<ExtComplex> = r
        .coeffs
        .iter()
        .map(|z| ExtComplex::from_c64(*z, prec) * inv_norm.clone())
        .collect();
    contfrac_from_pencil(&lift(&r.pencil.h, prec), &lift(&r.pencil.k, prec), &coeffs, opts)
}

/// Core conversion for a pencil `(H, K)` of size `(n+1) x n` whose basis
/// functions satisfy `l w^T K = w^T H` with `w_0 = 1`, and the function
/// `r = w^T coeffs`.
pub fn contfrac_from_pencil(
    h_in: &ExtMatrix,
    k_in: &ExtMatrix,
    coeffs: &[ExtComplex],
    opts: &ConversionOptions,
) -> Result<(FdGrid, ConversionTrace), GridgenError> {
    let n = h_in.cols();
    if n == 0 || h_in.rows() != n + 1 || k_in.rows() != n + 1 || k_in.cols() != n || coeffs.len() != n + 1 {
        return Err(GridgenError::Shape(format!(
            "pencil {}x{} with {} coefficients",
            h_in.rows(),
            n,
            coeffs.len()
        )));
    }
    let prec = coeffs[0].precision();
    let zero = ExtComplex::zero(prec);
    let one = ExtComplex::one(prec);
    let mut snapshots = Vec::with_capacity(7);

    // Step 0: basis (r, 1, e_k...) with the free unit vectors chosen so that
    // the coefficient entry left out is the largest one.
    let pivot = (1..=n)
        .max_by(|&a, &b| coeffs[a].abs_f64().total_cmp(&coeffs[b].abs_f64()))
        .expect("n >= 1");
    if coeffs[pivot].is_zero() {
        return Err(GridgenError::Numerics(NumericsError::Singular { pivot }));
    }
    let free_columns: Vec<usize> = (1..=n).filter(|&k| k != pivot).collect();
    let mut x = DenseMatrix::zeros_in(n + 1, n + 1, prec);
    for i in 0..=n {
        x[(i, 0)] = coeffs[i].clone();
    }
    x[(0, 1)] = one.clone();
    for (col, &k) in free_columns.iter().enumerate() {
        x[(k, col + 2)] = one.clone();
    }
    let xinv = inverse(&x)?;
    let mut h = xinv.matmul(h_in)?;
    let mut k = xinv.matmul(k_in)?;
    snapshots.push((h.clone(), k.clone()));

    // Step 1: K's lower block becomes the identity.
    let kl = k.submatrix(1..n + 1, 0..n);
    let r1 = inverse(&kl)?;
    h = h.matmul(&r1)?;
    k = k.matmul(&r1)?;
    snapshots.push((h.clone(), k.clone()));

    // Step 2: clear K's first row with rows 2..n; K[0,0] vanishes for a type (n, n-1) function.
    for j in 1..n {
        let alpha = k[(0, j)].clone();
        add_row_multiple(&mut h, 0, j + 1, &alpha);
        add_row_multiple(&mut k, 0, j + 1, &alpha);
    }
    let k00_residual = k[(0, 0)].abs_f64() / k.frobenius_norm();
    for j in 0..n {
        k[(0, j)] = zero.clone();
    }
    snapshots.push((h.clone(), k.clone()));

    // Step 3: clear H's first row right of the pivot with column operations.
    let h00 = h[(0, 0)].clone();
    if !(h00.abs_f64() > ExtComplex::epsilon(prec) * h.frobenius_norm()) {
        return Err(GridgenError::ZeroPivot);
    }
    for j in 1..n {
        let beta = h[(0, j)].clone() / h00.clone();
        add_col_multiple(&mut h, j, 0, &beta);
        add_col_multiple(&mut k, j, 0, &beta);
        h[(0, j)] = zero.clone();
    }
    snapshots.push((h.clone(), k.clone()));

    // Step 4: restore the identity in K's second row with rows 2..n.
    for j in 1..n {
        let alpha = k[(1, j)].clone();
        add_row_multiple(&mut h, 1, j + 1, &alpha);
        add_row_multiple(&mut k, 1, j + 1, &alpha);
        k[(1, j)] = zero.clone();
    }
    snapshots.push((h.clone(), k.clone()));

    // Step 5: tridiagonalize H's lower block by a biorthogonal similarity fixing e1.
    let hb = h.submatrix(1..n + 1, 0..n);
    let mut e1 = vec![zero.clone(); n];
    e1[0] = one.clone();
    let lz = two_sided_lanczos(&hb, &e1, &e1, Some(opts.lanczos_tol))?;
    let zl_h = lz.left.adjoint();
    let t = zl_h.matmul(&hb)?.matmul(&lz.right)?;
    let top = DenseMatrix::from_fn(1, n, |_, j| h[(0, j)].clone()).matmul(&lz.right)?;
    let kb = zl_h.matmul(&k.submatrix(1..n + 1, 0..n))?.matmul(&lz.right)?;
    for j in 0..n {
        h[(0, j)] = top[(0, j)].clone();
        k[(0, j)] = zero.clone();
        for i in 0..n {
            h[(i + 1, j)] = t[(i, j)].clone();
            k[(i + 1, j)] = kb[(i, j)].clone();
        }
    }
    snapshots.push((h.clone(), k.clone()));

    // Step 6: diagonal scalings matching the grid pattern. One-based names
    // follow the recurrences: eta(i, j) = H[i-1, j-1].
    let eta = h.clone();
    let e = |i: usize, j: usize| eta[(i - 1, j - 1)].clone();
    let mut ell = vec![one.clone(), one.clone()];
    let mut rho: Vec<ExtComplex> = Vec::with_capacity(n);
    let mut hs: Vec<ExtComplex> = Vec::with_capacity(n);
    let guard = |z: &ExtComplex| -> Result<(), GridgenError> {
        if z.is_zero() || !z.is_finite() {
            Err(GridgenError::DegenerateStep)
        } else {
            Ok(())
        }
    };
    let inv = |z: ExtComplex| -> Result<ExtComplex, GridgenError> {
        guard(&z)?;
        Ok(one.clone() / z)
    };
    // column 1
    let rho1 = inv(e(1, 1))?;
    let h1 = -inv(e(2, 1) * rho1.clone())?;
    rho.push(rho1.clone());
    hs.push(h1.clone());
    if n >= 2 {
        ell.push(inv(e(3, 1) * h1 * rho1)?);
    }
    for j in 2..=n {
        let hprev = hs[j - 2].clone();
        let rj = inv(ell[j - 1].clone() * e(j, j) * hprev.clone())?;
        let hj = -inv(inv(hprev)? + ell[j].clone() * e(j + 1, j) * rj.clone())?;
        if j + 2 <= n + 1 {
            ell.push(inv(e(j + 2, j) * hj.clone() * rj.clone())?);
        }
        rho.push(rj);
        hs.push(hj);
    }
    let dual: Vec<ExtComplex> = (1..=n).map(|j| ell[j].clone() * rho[j - 1].clone()).collect();

    // the scaled pencil L H R, L K R
    let mut h6 = h.clone();
    let mut k6 = k.clone();
    for i in 0..=n {
        for j in 0..n {
            let s = ell[i].clone() * rho[j].clone();
            h6[(i, j)] = h[(i, j)].clone() * s.clone();
            k6[(i, j)] = k[(i, j)].clone() * s;
        }
    }
    snapshots.push((h6, k6));

    let grid = FdGrid::new(
        hs.iter().map(Scalar::to_c64).collect(),
        dual.iter().map(Scalar::to_c64).collect(),
    )?;
    let trace = ConversionTrace {
        precision: prec,
        snapshots,
        free_columns,
        k00_residual,
        eta,
        ell,
        rho,
        primal: hs,
        dual,
    };
    Ok((grid, trace))
}

/// Grid pencil `(Ht, Kt)` for steps given in extended precision.
pub fn grid_pencil(primal: &[ExtComplex], dual: &[ExtComplex]) -> (ExtMatrix, ExtMatrix) {
    let n = primal.len();
    let prec = primal[0].precision();
    let one = ExtComplex::one(prec);
    let mut h = DenseMatrix::zeros_in(n + 1, n, prec);
    let mut k = DenseMatrix::zeros_in(n + 1, n, prec);
    let inv: Vec<ExtComplex> = primal.iter().map(|x| one.clone() / x.clone()).collect();
    h[(0, 0)] = one.clone();
    h[(1, 0)] = -inv[0].clone();
    if n >= 2 {
        h[(2, 0)] = inv[0].clone();
    }
    for j in 1..n {
        h[(j, j)] = inv[j - 1].clone();
        h[(j + 1, j)] = -(inv[j - 1].clone() + inv[j].clone());
        if j + 2 <= n {
            h[(j + 2, j)] = inv[j].clone();
        }
    }
    for j in 0..n {
        k[(j + 1, j)] = dual[j].clone();
    }
    (h, k)
}

/// Residual of the final pencil against the pattern built from the extracted steps.
pub fn final_residual(trace: &ConversionTrace) -> f64 {
    let (h6, k6) = &trace.snapshots[6];
    let (h, k) = grid_pencil(&trace.primal, &trace.dual);
    let scale = h.frobenius_norm() + k.frobenius_norm();
    let mut worst: f64 = 0.0;
    for i in 0..h.rows() {
        for j in 0..h.cols() {
            worst = worst.max((h6[(i, j)].clone() - h[(i, j)].clone()).abs_f64());
            worst = worst.max((k6[(i, j)].clone() - k[(i, j)].clone()).abs_f64());
        }
    }
    worst / scale
}

fn checked_inv(x: Complex64, lambda: Complex64) -> Result<Complex64, GridgenError> {
    if !(x.norm() > DEFAULT_POLE_THRESHOLD) {
        return Err(GridgenError::NearPole { lambda });
    }
    Ok(x.inv())
}

/// Bottom-up evaluation of the continued fraction.
pub fn cf_eval(g: &FdGrid, lambda: Complex64) -> Result<Complex64, GridgenError> {
    let n = g.len();
    let mut x = g.dual[n - 1] * lambda + checked_inv(g.primal[n - 1], lambda)?;
    for j in (1..n).rev() {
        let inner = g.primal[j - 1] + checked_inv(x, lambda)?;
        x = g.dual[j - 1] * lambda + checked_inv(inner, lambda)?;
    }
    if !(x.re.is_finite() && x.im.is_finite()) {
        return Err(GridgenError::NearPole { lambda });
    }
    Ok(x)
}

/// Solution of the grid scheme for a boundary vector `u0`.
#[derive(Clone, Debug)]
pub struct FdSolution {
    /// Boundary flux `b = r(A) u0`.
    pub b: Vec<Complex64>,
    /// Grid vectors `u_1..u_{n-1}`.
    pub interior: Vec<Vec<Complex64>>,
}

/// Solves the three-point scheme with `u_n = 0` eigenvalue by eigenvalue.
///
/// With `u_j = s_j u_{j-1}` the scheme gives, from the bottom,
/// `s_j = (1/h_j) / (1/h_j + 1/h_{j+1} + hhat_j l - s_{j+1}/h_{j+1})`, `s_n = 0`,
/// and `b = (hhat_0 l + 1/h_1) u_0 - u_1 / h_1`.
pub fn fd_solve(g: &FdGrid, a: &Operator, u0: &[Complex64]) -> Result<FdSolution, GridgenError> {
    let n = g.len();
    let y0 = a.to_spectral(u0)?;
    let inv_h: Vec<Complex64> = g.primal.iter().map(|h| h.inv()).collect();
    let mut b_hat = Vec::with_capacity(y0.len());
    let mut interior_hat = vec![Vec::with_capacity(y0.len()); n.saturating_sub(1)];
    let mut s = vec![Complex64::new(0.0, 0.0); n + 1];
    for (&lam, &y) in a.eigenvalues().iter().zip(&y0) {
        s[n] = Complex64::new(0.0, 0.0);
        for j in (1..n).rev() {
            let d = inv_h[j - 1] + inv_h[j] + g.dual[j] * lam - s[j + 1] * inv_h[j];
            if !(d.norm() > DEFAULT_POLE_THRESHOLD) {
                return Err(GridgenError::SingularSystem { lambda: lam });
            }
            s[j] = inv_h[j - 1] / d;
        }
        let mut u = y;
        for (j, col) in interior_hat.iter_mut().enumerate() {
            u *= s[j + 1];
            col.push(u);
        }
        let u1 = if n >= 2 { y * s[1] } else { Complex64::new(0.0, 0.0) };
        b_hat.push((g.dual[0] * lam + inv_h[0]) * y - u1 * inv_h[0]);
    }
    let b = a.from_spectral(&b_hat)?;
    let interior = interior_hat
        .iter()
        .map(|col| a.from_spectral(col))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(FdSolution { b, interior })
}
