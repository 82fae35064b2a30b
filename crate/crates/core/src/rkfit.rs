//! Rational least-squares fitting of `F v` by `r(A) v` (RKFIT).

use num_complex::Complex64;
use serde::Serialize;

use crate::numerics::{norm_f64, right_svd, DenseMatrix, ExtComplex, Extended, NumericsError, Precision, Scalar};
use crate::operators::{Operator, OperatorError};
use crate::rkspace::{expand, read_poles, rotate_starting_vector, Decomposition, Pencil, RkspaceError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RkfitError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("non-finite misfit")]
    NonFiniteMisfit,
    #[error("evaluation at or near a pole (lambda = {lambda})")]
    NearPole { lambda: Complex64 },
    #[error("poles {a} and {b} are too close for residue extraction")]
    ClusteredPoles { a: Complex64, b: Complex64 },
    #[error(transparent)]
    Rkspace(#[from] RkspaceError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Rational function of type `(n, n-1)` stored as a rational Krylov pencil
/// and coefficients in the associated basis.
#[derive(Clone, Debug)]
pub struct Rkfun {
    pub pencil: Pencil,
    pub coeffs: Vec<Complex64>,
    /// Norm of the starting vector the basis was built from.
    pub start_norm: f64,
}

/// Relative size of the recurrence pivot below which evaluation is refused.
const POLE_TOL: f64 = 1e-14;
const RESIDUE_POINTS: usize = 32;
/// Smallest distance of a relocated pole from the spectrum, relative to the spectral radius.
const POLE_SEPARATION: f64 = 1e-8;

impl Rkfun {
    pub fn degree(&self) -> usize {
        self.pencil.size()
    }

    /// Values `omega_j(lambda)` of the basis functions, from `lambda omega^T K = omega^T H`, `omega_1 = 1`.
    pub fn basis_values(&self, lambda: Complex64) -> Result<Vec<Complex64>, RkfitError> {
        self.basis_values_in(lambda, ())
    }

    fn basis_values_in<T: Scalar>(&self, lambda: Complex64, ctx: T::Ctx) -> Result<Vec<T>, RkfitError> {
        let (h, k) = (&self.pencil.h, &self.pencil.k);
        let n = self.degree();
        let lam = T::from_c64(lambda, ctx);
        let lift = |z: Complex64| T::from_c64(z, ctx);
        let mut omega = Vec::with_capacity(n + 1);
        omega.push(T::one(ctx));
        for j in 0..n {
            let mut s = T::zero(ctx);
            for (i, w) in omega.iter().enumerate() {
                s = s + w.clone() * (lam.clone() * lift(k[(i, j)]) - lift(h[(i, j)]));
            }
            let lk = lambda * k[(j + 1, j)];
            let d = lam.clone() * lift(k[(j + 1, j)]) - lift(h[(j + 1, j)]);
            if !(d.abs_f64() > POLE_TOL * (lk.norm() + h[(j + 1, j)].norm())) {
                return Err(RkfitError::NearPole { lambda });
            }
            omega.push(-s / d);
        }
        Ok(omega)
    }

    fn eval_in<T: Scalar>(&self, lambda: Complex64, ctx: T::Ctx) -> Result<Complex64, RkfitError> {
        let omega = self.basis_values_in::<T>(lambda, ctx)?;
        let mut acc = T::zero(ctx);
        for (w, c) in omega.into_iter().zip(&self.coeffs) {
            acc = acc + w * T::from_c64(*c, ctx);
        }
        let r = acc.to_c64() / self.start_norm;
        if !(r.re.is_finite() && r.im.is_finite()) {
            return Err(RkfitError::NearPole { lambda });
        }
        Ok(r)
    }

    pub fn eval(&self, lambda: Complex64) -> Result<Complex64, RkfitError> {
        self.eval_in::<Complex64>(lambda, ())
    }

    /// Evaluation with the recurrence carried out in `digits` significant
    /// digits; avoids the cancellation of the double recurrence where `|r|`
    /// is small compared with the basis functions.
    pub fn eval_precise(&self, lambda: Complex64, digits: u32) -> Result<Complex64, RkfitError> {
        self.eval_in::<ExtComplex>(lambda, Precision::from_digits(digits))
    }

    /// Poles of `r` (generalized eigenvalues of the lower pencil blocks).
    pub fn poles(&self) -> Result<Vec<Extended>, RkfitError> {
        Ok(read_poles(&self.pencil)?)
    }

    /// `r(A) v` through the spectral decomposition of `A`.
    pub fn apply(&self, a: &Operator, v: &[Complex64]) -> Result<Vec<Complex64>, RkfitError> {
        let values = a
            .eigenvalues()
            .iter()
            .map(|&l| self.eval(Complex64::new(l, 0.0)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(a.apply_spectral(&values, v)?)
    }

    /// Finite poles with residues from a trapezoidal contour average.
    pub fn poles_and_residues(&self) -> Result<Vec<(Complex64, Complex64)>, RkfitError> {
        let poles: Vec<Complex64> = self.poles()?.iter().filter_map(Extended::finite).collect();
        let radius = |z: Complex64| 1e-4 * (1.0 + z.norm());
        for (i, &a) in poles.iter().enumerate() {
            for &b in &poles[i + 1..] {
                if (a - b).norm() < 10.0 * radius(a).max(radius(b)) {
                    return Err(RkfitError::ClusteredPoles { a, b });
                }
            }
        }
        poles
            .iter()
            .map(|&xi| {
                let rho = radius(xi);
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..RESIDUE_POINTS {
                    let dz = Complex64::from_polar(rho, std::f64::consts::TAU * k as f64 / RESIDUE_POINTS as f64);
                    acc += dz * self.eval(xi + dz)?;
                }
                Ok((xi, acc / RESIDUE_POINTS as f64))
            })
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct RkfitOptions {
    pub maxit: usize,
    /// Relative improvement below which the iteration is declared stagnant.
    pub stagnation: f64,
    /// Misfit at which the iteration stops early.
    pub tol: f64,
    /// Starting poles (`n - 1` values); all infinite when absent.
    pub initial_poles: Option<Vec<Extended>>,
}

impl Default for RkfitOptions {
    fn default() -> Self {
        Self {
            maxit: 10,
            stagnation: 0.01,
            tol: 1e-14,
            initial_poles: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Tolerance,
    Stagnation,
    MaxIterations,
    NoFreePoles,
    Breakdown,
}

#[derive(Clone, Debug, Serialize)]
pub struct FitReport {
    pub degree: usize,
    /// Entry `k` is the misfit after `k` pole relocations.
    pub misfit_history: Vec<f64>,
    pub best_misfit: f64,
    /// Misfit of the returned function evaluated through its pencil, which
    /// can exceed `best_misfit` when the pencil recurrence is ill conditioned
    /// on the spectrum. Iterates are ranked by the larger of the two.
    pub evaluation_misfit: f64,
    pub best_iteration: usize,
    /// Number of pole relocations performed.
    pub iterations: usize,
    #[serde(serialize_with = "serialize_poles")]
    pub poles: Vec<Extended>,
    pub stop_reason: StopReason,
    pub lucky_breakdown: bool,
    pub failure: Option<String>,
    /// Set when the two smallest singular values in a relocation step agreed
    /// to 1e-10 relative, so the chosen vector depends on rounding.
    pub singular_value_tie: bool,
    /// Relocated poles moved off an eigenvalue they collided with.
    pub separated_poles: usize,
}

pub(crate) fn serialize_poles<S: serde::Serializer>(poles: &[Extended], s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(poles.len()))?;
    for p in poles {
        match p {
            Extended::Finite(z) => seq.serialize_element(&[z.re, z.im])?,
            Extended::Infinity => seq.serialize_element("inf")?,
        }
    }
    seq.end()
}

struct Projection {
    coeffs: Vec<Complex64>,
    residual: Vec<Complex64>,
}

/// Orthogonal projection onto the columns of `w`, with one refinement pass.
fn project(w: &DenseMatrix<Complex64>, x: &[Complex64]) -> Result<Projection, NumericsError> {
    let mut coeffs = vec![Complex64::new(0.0, 0.0); w.cols()];
    let mut residual = x.to_vec();
    for _ in 0..2 {
        let c = w.adjoint_matvec(&residual)?;
        let wc = w.matvec(&c)?;
        residual.iter_mut().zip(&wc).for_each(|(r, y)| *r -= y);
        coeffs.iter_mut().zip(&c).for_each(|(a, b)| *a += b);
    }
    Ok(Projection { coeffs, residual })
}

struct Iterate {
    misfit: f64,
    evaluation_misfit: f64,
    decomposition: Decomposition,
    coeffs: Vec<Complex64>,
    poles: Vec<Extended>,
    iteration: usize,
}

/// Fits `F v` with `r(A) v`, `r` of type `(n, n-1)`, by iterated pole relocation.
pub fn rkfit<F>(
    a: &Operator,
    f: F,
    v: &[Complex64],
    n: usize,
    opts: &RkfitOptions,
) -> Result<(Rkfun, FitReport), RkfitError>
where
    F: Fn(&[Complex64]) -> Result<Vec<Complex64>, OperatorError>,
{
    let size = a.size();
    if n < 1 {
        return Err(RkfitError::InvalidInput("degree must be at least 1".into()));
    }
    if size < n + 2 {
        return Err(RkfitError::InvalidInput(format!(
            "dimension {size} too small for degree {n}"
        )));
    }
    if v.len() != size || !(norm_f64(v) > 0.0) {
        return Err(RkfitError::InvalidInput(
            "training vector is zero or has the wrong length".into(),
        ));
    }
    let fv = f(v)?;
    let fv_norm = norm_f64(&fv);
    if !(fv_norm > 0.0 && fv_norm.is_finite()) {
        return Err(RkfitError::InvalidInput("F v is zero or not finite".into()));
    }
    let mut poles = match &opts.initial_poles {
        Some(p) if p.len() == n - 1 => p.clone(),
        Some(p) => {
            return Err(RkfitError::InvalidInput(format!(
                "{} initial poles given for degree {n}",
                p.len()
            )))
        }
        None => vec![Extended::Infinity; n - 1],
    };

    let mut history = Vec::new();
    let mut best: Option<Iterate> = None;
    let mut relocations = 0;
    let mut lucky = false;
    let mut failure = None;
    let mut tie = false;
    let mut separated = 0;
    let stop_reason;
    loop {
        let mut space_poles = poles.clone();
        space_poles.push(Extended::Infinity);
        let dec = match expand(a, v, &space_poles) {
            Ok(d) => d,
            Err(e) => {
                if best.is_none() {
                    return Err(e.into());
                }
                lucky = matches!(e, RkspaceError::LuckyBreakdown { .. });
                failure = Some(e.to_string());
                stop_reason = StopReason::Breakdown;
                break;
            }
        };
        let proj = project(&dec.basis, &fv)?;
        let misfit = norm_f64(&proj.residual) / fv_norm;
        if !misfit.is_finite() {
            if best.is_none() {
                return Err(RkfitError::NonFiniteMisfit);
            }
            failure = Some("non-finite misfit".into());
            stop_reason = StopReason::Breakdown;
            break;
        }
        history.push(misfit);
        let candidate = Rkfun {
            pencil: dec.pencil.clone(),
            coeffs: proj.coeffs.clone(),
            start_norm: dec.start_norm,
        };
        let evaluation_misfit = match candidate.apply(a, v) {
            Ok(rv) => {
                let d: Vec<Complex64> = fv.iter().zip(&rv).map(|(x, y)| x - y).collect();
                norm_f64(&d) / fv_norm
            }
            Err(_) => f64::INFINITY,
        };
        let score = misfit.max(evaluation_misfit);
        if best.as_ref().is_none_or(|b| score < b.misfit.max(b.evaluation_misfit)) {
            best = Some(Iterate {
                misfit,
                evaluation_misfit,
                decomposition: dec.clone(),
                coeffs: proj.coeffs,
                poles: poles.clone(),
                iteration: relocations,
            });
        }

        if misfit <= opts.tol {
            stop_reason = StopReason::Tolerance;
            break;
        }
        if n == 1 {
            stop_reason = StopReason::NoFreePoles;
            break;
        }
        if history.len() >= 2 {
            let prev = history[history.len() - 2];
            if prev - misfit < opts.stagnation * prev {
                stop_reason = StopReason::Stagnation;
                break;
            }
        }
        if relocations >= opts.maxit {
            stop_reason = StopReason::MaxIterations;
            break;
        }

        match relocate(&dec, &f, n, &mut tie) {
            Ok(p) => {
                poles = p;
                separated += separate_from_spectrum(a, &mut poles);
            }
            Err(e) => {
                failure = Some(e.to_string());
                stop_reason = StopReason::Breakdown;
                break;
            }
        }
        relocations += 1;
    }

    let best = best.expect("at least one iterate is recorded");
    let rkfun = Rkfun {
        pencil: best.decomposition.pencil,
        coeffs: best.coeffs,
        start_norm: best.decomposition.start_norm,
    };
    let report = FitReport {
        degree: n,
        best_misfit: best.misfit,
        evaluation_misfit: best.evaluation_misfit,
        best_iteration: best.iteration,
        misfit_history: history,
        iterations: relocations,
        poles: best.poles,
        stop_reason,
        lucky_breakdown: lucky,
        failure,
        singular_value_tie: tie,
        separated_poles: separated,
    };
    Ok((rkfun, report))
}

/// Moves finite poles closer than `POLE_SEPARATION * |l|` to an eigenvalue
/// `l` out to that distance. A pole on an eigenvalue deflates its eigenvector,
/// which the nearby shift still does, while keeping the pencil recurrence
/// usable at that eigenvalue.
fn separate_from_spectrum(a: &Operator, poles: &mut [Extended]) -> usize {
    let mut moved = 0;
    for p in poles.iter_mut() {
        let Extended::Finite(xi) = *p else { continue };
        let nearest = a
            .eigenvalues()
            .iter()
            .copied()
            .min_by(|x, y| (xi - x).norm().total_cmp(&(xi - y).norm()));
        if let Some(l) = nearest {
            let d = xi - l;
            let offset = POLE_SEPARATION * l.abs();
            if d.norm() < offset {
                let dir = if d.norm() > 0.0 {
                    d / d.norm()
                } else {
                    Complex64::new(0.0, 1.0)
                };
                *p = Extended::Finite(l + dir * offset);
                moved += 1;
            }
        }
    }
    moved
}

/// One pole relocation: smallest right singular vector of `(I - W W^H) F V_n`,
/// moved into the first basis position; the new poles are read off the
/// transformed pencil.
fn relocate<F>(dec: &Decomposition, f: &F, n: usize, tie: &mut bool) -> Result<Vec<Extended>, RkfitError>
where
    F: Fn(&[Complex64]) -> Result<Vec<Complex64>, OperatorError>,
{
    let w = &dec.basis;
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let fvj = f(w.column(j))?;
        cols.push(project(w, &fvj)?.residual);
    }
    let s = DenseMatrix::from_columns(w.rows(), &cols)?;
    let svd = right_svd(&s)?;
    let mut order: Vec<usize> = (0..svd.values.len()).collect();
    order.sort_by(|&i, &j| svd.values[i].total_cmp(&svd.values[j]).then(j.cmp(&i)));
    let smallest = order[0];
    if order.len() > 1 {
        let (s0, s1) = (svd.values[order[0]], svd.values[order[1]]);
        if (s1 - s0) <= 1e-10 * s1 {
            *tie = true;
        }
    }
    let c = svd.right.column(smallest).to_vec();
    let truncated = dec.pencil.leading(n - 1);
    let rot = rotate_starting_vector(&truncated, &c)?;
    Ok(read_poles(&rot.pencil)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn diag_fn(
        a: &Operator,
        g: impl Fn(f64) -> Complex64,
    ) -> impl Fn(&[Complex64]) -> Result<Vec<Complex64>, OperatorError> + '_ {
        let vals: Vec<Complex64> = a.eigenvalues().iter().map(|&l| g(l)).collect();
        move |x: &[Complex64]| a.apply_spectral(&vals, x)
    }

    #[test]
    fn fits_the_identity_function() {
        let a = Operator::diagonal((1..=12).map(|i| i as f64 * 0.5 - 3.2).collect()).unwrap();
        let v = vec![c(1.0); 12];
        let (r, rep) = rkfit(&a, |x: &[Complex64]| a.apply(x), &v, 1, &RkfitOptions::default()).unwrap();
        assert!(rep.best_misfit <= 1e-13);
        assert!((r.eval(c(7.0)).unwrap() - 7.0).norm() < 1e-12);
        assert!(r.poles_and_residues().unwrap().is_empty());
    }

    #[test]
    fn one_iteration_recovers_a_rational_target() {
        // eigenvalues avoid the target pole at 3
        let a = Operator::diagonal(vec![-5.0, -4.0, -3.0, -2.0, -1.0, 1.0, 2.0, 4.0, 5.0, 6.0]).unwrap();
        let f = diag_fn(&a, |l| c(l * l / (l - 3.0)));
        let v = vec![c(1.0); 10];
        let (r, rep) = rkfit(&a, &f, &v, 2, &RkfitOptions::default()).unwrap();
        assert!(rep.misfit_history.len() >= 2);
        assert!(rep.misfit_history[1] <= 1e-11, "{:?}", rep.misfit_history);
        assert!((r.eval(c(5.0)).unwrap() - 12.5).norm() < 1e-9);
        let pr = r.poles_and_residues().unwrap();
        assert_eq!(pr.len(), 1);
        assert!((pr[0].0 - 3.0).norm() < 1e-8);
        assert!((pr[0].1 - 9.0).norm() < 1e-6, "{}", pr[0].1);
    }

    #[test]
    fn eval_matches_componentwise_ratio() {
        let a = Operator::diagonal((0..40).map(|i| (i as f64 - 17.5) * 0.37).collect()).unwrap();
        let f = diag_fn(&a, |l| crate::operators::branch_sqrt(c(l)));
        let v: Vec<Complex64> = (0..40).map(|i| c(1.0 + 0.1 * (i as f64).sin())).collect();
        let (r, _) = rkfit(&a, &f, &v, 5, &RkfitOptions::default()).unwrap();
        let rv = r.apply(&a, &v).unwrap();
        for (i, &l) in a.eigenvalues().iter().enumerate() {
            let want = rv[i] / v[i];
            let got = r.eval(c(l)).unwrap();
            assert!((got - want).norm() <= 1e-10 * want.norm().max(1e-300));
        }
    }

    #[test]
    fn best_misfit_is_min_of_history() {
        let a = Operator::diagonal((0..50).map(|i| (i as f64 - 20.5) * 1.3).collect()).unwrap();
        let f = diag_fn(&a, |l| crate::operators::branch_sqrt(c(l)));
        let v = vec![c(1.0); 50];
        let (_, rep) = rkfit(&a, &f, &v, 6, &RkfitOptions::default()).unwrap();
        let min = rep.misfit_history.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(rep.best_misfit, min);
        assert!(rep.misfit_history.iter().all(|m| m.is_finite()));
    }

    #[test]
    fn rejects_bad_input() {
        let a = Operator::diagonal(vec![1.0, 2.0, 3.0]).unwrap();
        let v = vec![c(1.0); 3];
        let f = |x: &[Complex64]| a.apply(x);
        assert!(rkfit(&a, f, &v, 0, &RkfitOptions::default()).is_err());
        assert!(rkfit(&a, f, &v, 2, &RkfitOptions::default()).is_err());
    }
}
