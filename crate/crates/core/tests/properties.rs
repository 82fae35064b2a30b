use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;

use dtn_compress::gridgen::{cf_eval, to_contfrac, FdGrid};
use dtn_compress::numerics::norm_f64;
use dtn_compress::numerics::{generalized_eigenvalues, DenseMatrix, Extended, Lu};
use dtn_compress::operators::{
    build_operator, count_real_poles, discrete_const, DtnSpec, Operator, OperatorError, OperatorKind,
};
use dtn_compress::rkfit::{rkfit, RkfitOptions};
use dtn_compress::rkspace::{expand, read_poles};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn complex() -> impl Strategy<Value = Complex64> {
    (-1.0..1.0f64, -1.0..1.0f64).prop_map(|(a, b)| c(a, b))
}

/// 20 negative and 20 positive eigenvalues, logspaced.
fn test_spectrum() -> Vec<f64> {
    let mut e: Vec<f64> = (0..20).map(|i| -(10f64.powf(-1.0 + 2.5 * i as f64 / 19.0))).collect();
    e.extend((0..20).map(|i| 10f64.powf(-1.0 + 3.5 * i as f64 / 19.0)));
    e
}

fn ones(n: usize) -> Vec<Complex64> {
    vec![c(1.0, 0.0); n]
}

/// Coefficients of `det(A - t B)`, fitted from determinant samples at
/// `t = 0..=n`. Integer pencils have integer coefficients, so rounding is exact.
fn det_polynomial(a: &DenseMatrix<Complex64>, b: &DenseMatrix<Complex64>) -> Vec<f64> {
    let n = a.rows();
    let det = |t: f64| {
        let m = DenseMatrix::from_fn(n, n, |i, j| a[(i, j)] - b[(i, j)] * t);
        Lu::factor(&m).map(|lu| lu.determinant().re).unwrap_or(0.0)
    };
    let vander: Vec<f64> = (0..=n)
        .flat_map(|i| (0..=n).map(move |k| (i as f64).powi(k as i32)))
        .collect();
    let rhs: Vec<f64> = (0..=n).map(|i| det(i as f64)).collect();
    let coeffs = nalgebra::DMatrix::from_row_slice(n + 1, n + 1, &vander)
        .lu()
        .solve(&nalgebra::DVector::from_vec(rhs))
        .unwrap();
    coeffs.iter().map(|x| x.round()).collect()
}

fn integer_matrix(n: usize) -> impl Strategy<Value = DenseMatrix<Complex64>> {
    prop::collection::vec(-3i32..=3, n * n)
        .prop_map(move |v| DenseMatrix::from_fn(n, n, |i, j| c(v[i * n + j] as f64, 0.0)))
}

fn integer_pencil() -> impl Strategy<Value = (DenseMatrix<Complex64>, DenseMatrix<Complex64>)> {
    (1usize..=4).prop_flat_map(|n| (integer_matrix(n), integer_matrix(n)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn qz_eigenvalues_are_determinant_roots((a, b) in integer_pencil()) {
        let p = det_polynomial(&a, &b);
        // singular pencils have no well-defined eigenvalues
        prop_assume!(p.iter().any(|&x| x != 0.0));
        let degree = p.iter().rposition(|&x| x != 0.0).unwrap();
        let ev = generalized_eigenvalues(&a, &b).unwrap();
        prop_assert_eq!(ev.len(), a.rows());
        let finite: Vec<Complex64> = ev.iter().filter_map(Extended::finite).collect();
        prop_assert_eq!(finite.len(), degree, "{:?} for {:?}", ev, p);
        for t in finite {
            let value: Complex64 = p.iter().rev().fold(c(0.0, 0.0), |acc, &k| acc * t + k);
            let scale: f64 = p.iter().enumerate().map(|(k, x)| x.abs() * t.norm().max(1.0).powi(k as i32)).sum();
            prop_assert!(value.norm() <= 1e-7 * scale, "p({}) = {} for {:?}", t, value, p);
        }
    }

    #[test]
    fn kronecker_spectrum_is_sum_of_one_dimensional(m in 2usize..9, h in 0.05..0.5f64, k in 0.0..10.0f64) {
        let one = build_operator(OperatorKind::Neumann1d, m, h, k).unwrap();
        let two = build_operator(OperatorKind::Kron2d, m * m, h, k).unwrap();
        let e1 = one.eigenvalues();
        let e2 = two.eigenvalues();
        let scale = 8.0 / (h * h) + k * k;
        for j in 0..m {
            for i in 0..m {
                let want = e1[i] + e1[j] + k * k;
                prop_assert!((e2[i + m * j] - want).abs() <= 1e-12 * scale);
            }
        }
        // applying the operator agrees with its dense matrix
        let x: Vec<Complex64> = (0..m * m).map(|i| c((i as f64).sin(), (i as f64 * 0.3).cos())).collect();
        let y = two.apply(&x).unwrap();
        let z = two.dense().matvec(&x).unwrap();
        for (p, q) in y.iter().zip(&z) {
            prop_assert!((p - q).norm() <= 1e-11 * scale);
        }
    }

    #[test]
    fn resonance_count_stays_in_bracket(t in 0.05..4.0f64, s in 0.1..30.0f64) {
        let offset = -s * s;
        let pc = count_real_poles(t, offset).unwrap();
        let floor = (t * s / PI).floor() as usize;
        prop_assert_eq!(pc.floor, floor);
        prop_assert!(pc.count == floor || pc.count == floor + 1);
        prop_assert_eq!(pc.roots.len(), pc.count);
        prop_assert!(pc.roots.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(pc.roots.iter().all(|&l| l > 0.0 && l < -offset));
        prop_assert_eq!(count_real_poles(t, s * s).unwrap().count, 0);
    }

    #[test]
    fn rational_krylov_poles_are_recovered(
        poles in prop::collection::vec((-50.0..200.0f64, 10.0..50.0f64, any::<bool>()), 1..6),
    ) {
        let a = Operator::diagonal(test_spectrum()).unwrap();
        let mut xs: Vec<Extended> = poles
            .iter()
            .map(|&(re, im, up)| Extended::Finite(c(re, if up { im } else { -im })))
            .collect();
        xs.push(Extended::Infinity);
        let dec = expand(&a, &ones(a.size()), &xs).unwrap();
        let mut got = read_poles(&dec.pencil).unwrap();
        prop_assert_eq!(got.len(), xs.len());
        for want in &xs {
            let pos = got.iter().position(|g| match (g, want) {
                (Extended::Infinity, Extended::Infinity) => true,
                (Extended::Finite(p), Extended::Finite(q)) => (p - q).norm() <= 1e-10 * q.norm(),
                _ => false,
            });
            prop_assert!(pos.is_some(), "pole {} not found in {:?}", want, got);
            got.remove(pos.unwrap());
        }
    }

    #[test]
    fn rational_targets_are_recovered_exactly(
        lin in complex(),
        constant in complex(),
        terms in prop::collection::vec((-50.0..200.0f64, 3.5..30.0f64, complex()), 0..6),
    ) {
        let eigs = test_spectrum();
        let values: Vec<Complex64> = eigs
            .iter()
            .map(|&l| {
                let l = c(l, 0.0);
                lin * l + constant + terms.iter().map(|&(re, im, r)| r * 10.0 / (l - c(re, im))).sum::<Complex64>()
            })
            .collect();
        let a = Operator::diagonal(eigs).unwrap();
        let f = |x: &[Complex64]| -> Result<Vec<Complex64>, OperatorError> {
            Ok(x.iter().zip(&values).map(|(p, q)| p * q).collect())
        };
        let n = terms.len() + 1;
        let (_, rep) = rkfit(&a, f, &ones(a.size()), n, &RkfitOptions::default()).unwrap();
        let h = &rep.misfit_history;
        prop_assert!(*h.get(1).unwrap_or(&h[0]) <= 1e-10, "{:?}", h);
    }

    #[test]
    fn grid_survives_fit_and_conversion(
        steps in prop::collection::vec((0.2..2.0f64, 0.2..1.2f64, 0.2..2.0f64, 0.2..1.2f64), 1..4),
    ) {
        // grid -> continued fraction -> exact fit -> grid
        let primal: Vec<Complex64> = steps.iter().map(|&(r, t, _, _)| Complex64::from_polar(r, t)).collect();
        let dual: Vec<Complex64> = steps.iter().map(|&(_, _, r, t)| Complex64::from_polar(r, t)).collect();
        let grid = FdGrid::new(primal.clone(), dual.clone()).unwrap();
        let eigs = test_spectrum();
        let values: Vec<Complex64> = eigs.iter().map(|&l| cf_eval(&grid, c(l, 0.0)).unwrap()).collect();
        let a = Operator::diagonal(eigs).unwrap();
        let f = |x: &[Complex64]| -> Result<Vec<Complex64>, OperatorError> {
            Ok(x.iter().zip(&values).map(|(p, q)| p * q).collect())
        };
        let (r, rep) = rkfit(&a, f, &ones(a.size()), grid.len(), &RkfitOptions::default()).unwrap();
        prop_assume!(rep.best_misfit <= 1e-11);
        let (back, _) = to_contfrac(&r).unwrap();
        prop_assert_eq!(back.len(), grid.len());
        for (x, y) in back.primal.iter().zip(&primal).chain(back.dual.iter().zip(&dual)) {
            prop_assert!((x - y).norm() <= 1e-6 * y.norm(), "{} vs {}", x, y);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn misfit_does_not_grow_with_degree(lo in 0.01..1.0f64, gap in 0.01..1.0f64, hi in 50.0..5000.0f64) {
        let mut eigs: Vec<f64> = (0..30).map(|i| -lo - (50.0 - lo) * i as f64 / 29.0).collect();
        eigs.extend((0..30).map(|i| gap * (hi / gap).powf(i as f64 / 29.0)));
        let a = Operator::diagonal(eigs).unwrap();
        let values = a.function(&DtnSpec::Sqrt).unwrap().values().to_vec();
        let f = |x: &[Complex64]| -> Result<Vec<Complex64>, OperatorError> {
            Ok(x.iter().zip(&values).map(|(p, q)| p * q).collect())
        };
        let misfits: Vec<f64> = (1..=8)
            .map(|n| rkfit(&a, f, &ones(a.size()), n, &RkfitOptions::default()).unwrap().1.best_misfit)
            .collect();
        for w in misfits.windows(2) {
            prop_assert!(w[1] <= 3.0 * w[0] + 1e-13, "{:?}", misfits);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn discrete_impedance_is_outgoing(h in 0.001..0.5f64, frac in -0.999..50.0f64) {
        let lam = frac * 4.0 / (h * h);
        prop_assert!(discrete_const(h, c(lam, 0.0)).im >= 0.0);
    }

    #[test]
    fn discrete_impedance_squares_back(h in 0.001..0.5f64, re in -1e4..1e4f64, im in -1e4..1e4f64) {
        let lam = c(re, im);
        let f = discrete_const(h, lam);
        let r = f * f - lam - lam * lam * (h * h / 4.0);
        prop_assert!(r.norm() <= 1e-12 * (1.0 + lam.norm_sqr()));
    }
}

fn sqrt_problem(lo: f64, hi: f64) -> (Operator, Vec<Complex64>) {
    let mut eigs: Vec<f64> = (0..30).map(|i| -lo - (50.0 - lo) * i as f64 / 29.0).collect();
    eigs.extend((0..30).map(|i| lo * (hi / lo).powf(i as f64 / 29.0)));
    let a = Operator::diagonal(eigs).unwrap();
    let values = a.function(&DtnSpec::Sqrt).unwrap().values().to_vec();
    (a, values)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn best_misfit_does_not_grow_with_maxit(lo in 0.01..1.0f64, hi in 50.0..5000.0f64, n in 3usize..8) {
        let (a, values) = sqrt_problem(lo, hi);
        let f = |x: &[Complex64]| -> Result<Vec<Complex64>, OperatorError> {
            Ok(x.iter().zip(&values).map(|(p, q)| p * q).collect())
        };
        let misfits: Vec<f64> = (0..6)
            .map(|maxit| {
                let opts = RkfitOptions { maxit, stagnation: 0.0, ..RkfitOptions::default() };
                rkfit(&a, f, &ones(a.size()), n, &opts).unwrap().1.best_misfit
            })
            .collect();
        for w in misfits.windows(2) {
            prop_assert!(w[1] <= w[0], "{:?}", misfits);
        }
    }

    #[test]
    fn coefficients_are_least_squares_optimal(lo in 0.01..1.0f64, hi in 50.0..5000.0f64, n in 2usize..7, seed in any::<u64>()) {
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let (a, values) = sqrt_problem(lo, hi);
        let f = |x: &[Complex64]| -> Result<Vec<Complex64>, OperatorError> {
            Ok(x.iter().zip(&values).map(|(p, q)| p * q).collect())
        };
        let v = ones(a.size());
        let (r, _) = rkfit(&a, f, &v, n, &RkfitOptions::default()).unwrap();
        let fv = f(&v).unwrap();
        let poles = r.poles().unwrap();
        let basis = expand(&a, &v, &poles).unwrap().basis;
        // best coefficients in this basis, then random perturbations around them
        let coeffs = basis.adjoint_matvec(&fv).unwrap();
        let misfit = |x: &[Complex64]| {
            let w = basis.matvec(x).unwrap();
            norm_f64(&fv.iter().zip(&w).map(|(p, q)| p - q).collect::<Vec<_>>())
        };
        let best = misfit(&coeffs);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..50 {
            let d: Vec<Complex64> = (0..coeffs.len())
                .map(|_| c(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)))
                .collect();
            let dn = norm_f64(&d);
            let moved: Vec<Complex64> = coeffs.iter().zip(&d).map(|(x, y)| x + y * (1e-3 / dn)).collect();
            prop_assert!(misfit(&moved) >= best);
        }
        // the returned function is the projection onto that basis
        let rv = r.apply(&a, &v).unwrap();
        let diff: Vec<Complex64> = rv.iter().zip(basis.matvec(&coeffs).unwrap()).map(|(p, q)| p - q).collect();
        prop_assert!(norm_f64(&diff) <= 1e-8 * norm_f64(&fv));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn evaluation_is_finite_away_from_poles(lo in 0.01..1.0f64, hi in 50.0..5000.0f64, n in 1usize..9, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let (a, values) = sqrt_problem(lo, hi);
        let f = |x: &[Complex64]| -> Result<Vec<Complex64>, OperatorError> {
            Ok(x.iter().zip(&values).map(|(p, q)| p * q).collect())
        };
        let (r, _) = rkfit(&a, f, &ones(a.size()), n, &RkfitOptions::default()).unwrap();
        let poles: Vec<Complex64> = r.poles().unwrap().iter().filter_map(Extended::finite).collect();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..1000 {
            let x = c(rng.random_range(-2.0 * hi..2.0 * hi), 0.0);
            if poles.iter().any(|p| (p - x).norm() <= 1e-8) {
                continue;
            }
            let y = r.eval(x).unwrap();
            prop_assert!(y.re.is_finite() && y.im.is_finite(), "r({}) = {}", x, y);
        }
    }
}
