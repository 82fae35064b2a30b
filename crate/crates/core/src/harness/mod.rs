//! Experiment runner for the convergence studies, grid export and
//! resonance counts.

mod rates;
mod setup;

use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::gridgen::{cf_eval, fd_solve, to_contfrac_with, ConversionOptions, FdGrid, GridgenError};
use crate::numerics::norm_f64;
use crate::operators::{count_real_poles, OperatorError, SpectralIntervals};
use crate::rkfit::{rkfit, RkfitError, RkfitOptions, Rkfun, StopReason};

pub use rates::{fit_geometric_rate, fit_sqrt_rate, nyquist_count, predicted_rate_zolotarev, NyquistVariant};
pub use setup::{layer_offsets, Setup, LAYER_OFFSETS, NYQUIST_THICKNESSES};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HarnessError {
    #[error("spectral intervals {0:?} are not indefinite")]
    NotIndefinite(SpectralIntervals),
    #[error("need at least {needed} usable data points, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("layer offset {offset} exceeds k^2 (evanescent layer)")]
    Evanescent { offset: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("grid check failed: {0}")]
    GridCheck(String),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Rkfit(#[from] RkfitError),
    #[error(transparent)]
    Gridgen(#[from] GridgenError),
    #[error("i/o error: {0}")]
    Io(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentId {
    #[value(name = "ex51")]
    Ex51,
    #[value(name = "ex52")]
    Ex52,
    #[value(name = "ex53")]
    Ex53,
    #[value(name = "vc61")]
    Vc61,
    #[value(name = "vc62")]
    Vc62,
    #[value(name = "waveguide_fig1")]
    WaveguideFig1,
    #[value(name = "nyquist_table")]
    NyquistTable,
    #[value(name = "pole_count")]
    PoleCount,
}

impl ExperimentId {
    pub fn default_degrees(self) -> (usize, usize) {
        match self {
            ExperimentId::WaveguideFig1 => (8, 8),
            ExperimentId::NyquistTable => (1, 40),
            _ => (1, 25),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    pub min_degree: usize,
    pub max_degree: usize,
    pub seed: u64,
    /// Significant digits of the continued-fraction conversion.
    pub digits: u32,
    /// Target test error of the minimal-degree search.
    pub tol: f64,
    /// Coarser transverse grid for the 2D experiments.
    pub small: bool,
    /// Convert every fit to a grid and check it.
    pub check_grids: bool,
    /// Layer thickness for single-thickness runs of the layered experiments;
    /// all tabulated thicknesses are swept when absent.
    pub thickness: Option<f64>,
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentId) -> Self {
        let (min_degree, max_degree) = experiment.default_degrees();
        Self {
            experiment,
            min_degree,
            max_degree,
            seed: 0,
            digits: 40,
            tol: 1e-5,
            small: false,
            check_grids: true,
            thickness: None,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.min_degree < 1 || self.min_degree > self.max_degree {
            return Err(HarnessError::Config(format!(
                "degree range {}..{} is empty",
                self.min_degree, self.max_degree
            )));
        }
        if self.digits < 30 {
            return Err(HarnessError::Config("conversion needs at least 30 digits".into()));
        }
        if !(self.tol > 0.0) {
            return Err(HarnessError::Config("tolerance must be positive".into()));
        }
        if let Some(t) = self.thickness {
            if !(t > 0.0 && t.is_finite()) {
                return Err(HarnessError::Config(format!("invalid thickness {t}")));
            }
        }
        Ok(())
    }

    fn thicknesses(&self) -> Vec<f64> {
        match self.thickness {
            Some(t) => vec![t],
            None => NYQUIST_THICKNESSES.to_vec(),
        }
    }
}

/// Outcome of the grid conversion of one fit.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridCheck {
    /// Largest `|r - cf|/|r|` over the sample points, with `r` evaluated in
    /// the conversion precision.
    pub roundtrip_error: f64,
    /// `||b - r(A) u0|| / ||r(A) u0||` for the grid solve.
    pub fd_error: f64,
    /// Largest entry outside the expected zero patterns, relative.
    pub pattern_residual: f64,
    /// `||u_{n-1}|| / ||u_0||` along the grid.
    pub decay: Option<f64>,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DegreeRecord {
    pub degree: usize,
    pub thickness: Option<f64>,
    pub training_misfit: Option<f64>,
    pub test_error: Option<f64>,
    pub iterations: usize,
    pub misfit_history: Vec<f64>,
    pub stop_reason: Option<StopReason>,
    pub lucky_breakdown: bool,
    pub singular_value_tie: bool,
    /// Relocated poles moved off a colliding eigenvalue.
    pub separated_poles: usize,
    /// Fits attempted, including refits with fresh vectors after a breakdown.
    pub attempts: usize,
    pub failure: Option<String>,
    pub grid: Option<GridCheck>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateSummary {
    pub thickness: Option<f64>,
    pub spectral_intervals: Option<SpectralIntervals>,
    pub predicted_rate: Option<f64>,
    /// Least-squares factor per degree over the sweep.
    pub fitted_geometric_rate: Option<f64>,
    /// Exponent `g` of `exp(-g sqrt(n))`.
    pub fitted_sqrt_rate: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NyquistRow {
    pub thickness: f64,
    pub nyquist_table: f64,
    pub nyquist_with_pi: f64,
    pub sem: f64,
    pub vc61_degree: Option<usize>,
    pub vc62_degree: Option<usize>,
    pub reference_vc61: usize,
    pub reference_vc62: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PoleCountRecord {
    pub thickness: f64,
    pub offset: f64,
    pub count: usize,
    pub floor: usize,
    pub roots: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub experiment: ExperimentId,
    pub seed: u64,
    pub digits: u32,
    pub small: bool,
    pub operator_size: Option<usize>,
    pub rates: Vec<RateSummary>,
    pub degrees: Vec<DegreeRecord>,
    pub nyquist: Vec<NyquistRow>,
    pub pole_counts: Vec<PoleCountRecord>,
}

impl ConvergenceReport {
    fn empty(cfg: &ExperimentConfig) -> Self {
        Self {
            experiment: cfg.experiment,
            seed: cfg.seed,
            digits: cfg.digits,
            small: cfg.small,
            operator_size: None,
            rates: Vec::new(),
            degrees: Vec::new(),
            nyquist: Vec::new(),
            pole_counts: Vec::new(),
        }
    }

    /// `(degree, test error)` pairs of the successful fits for one thickness.
    pub fn test_errors(&self, thickness: Option<f64>) -> Vec<(usize, f64)> {
        self.degrees
            .iter()
            .filter(|d| d.thickness == thickness)
            .filter_map(|d| d.test_error.map(|e| (d.degree, e)))
            .collect()
    }

    pub fn training_misfits(&self, thickness: Option<f64>) -> Vec<(usize, f64)> {
        self.degrees
            .iter()
            .filter(|d| d.thickness == thickness)
            .filter_map(|d| d.training_misfit.map(|e| (d.degree, e)))
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report types serialize")
    }

    /// Convergence curves as CSV.
    pub fn write_curves_csv<W: Write>(&self, out: W) -> Result<(), HarnessError> {
        let io = |e: csv::Error| HarnessError::Io(e.to_string());
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["degree", "thickness", "training_misfit", "test_error", "iterations"])
            .map_err(io)?;
        let opt = |x: Option<f64>| x.map(|v| format!("{v:e}")).unwrap_or_default();
        for d in &self.degrees {
            w.write_record(&[
                d.degree.to_string(),
                d.thickness.map(|t| t.to_string()).unwrap_or_default(),
                opt(d.training_misfit),
                opt(d.test_error),
                d.iterations.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| HarnessError::Io(e.to_string()))
    }

    /// Writes the JSON report to `path` and the curves next to it.
    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        let io = |e: std::io::Error| HarnessError::Io(format!("{}: {e}", path.display()));
        std::fs::write(path, self.to_json() + "\n").map_err(io)?;
        if !self.degrees.is_empty() {
            let file = std::fs::File::create(path.with_extension("csv")).map_err(io)?;
            self.write_curves_csv(file)?;
        }
        Ok(())
    }
}

const MAX_ATTEMPTS: usize = 4;

fn thread_pool() -> rayon::ThreadPool {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = std::env::var("DTN_THREADS").ok().and_then(|s| s.parse::<usize>().ok()) {
        b = b.num_threads(n.max(1));
    }
    b.build().expect("thread pool")
}

/// Normal random vector from the stream of `(seed, degree, attempt)`.
fn normal_vector(seed: u64, stream: u64, len: usize) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    (0..len)
        .map(|_| Complex64::new(StandardNormal.sample(&mut rng), 0.0))
        .collect()
}

fn stream_id(degree: usize, attempt: usize, which: u64) -> u64 {
    ((degree as u64) << 20) | ((attempt as u64) << 4) | which
}

/// A fitted approximant together with its grid, when conversion succeeded.
pub struct FitOutcome {
    pub record: DegreeRecord,
    pub rkfun: Option<Rkfun>,
    pub grid: Option<FdGrid>,
}

fn relative_error(a: &[Complex64], b: &[Complex64]) -> f64 {
    let diff: Vec<Complex64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm_f64(&diff) / norm_f64(b)
}

/// Sample points: `per_side` logspaced magnitudes on each spectral subinterval.
pub fn sample_points(s: &SpectralIntervals, per_side: usize) -> Vec<f64> {
    let logspace = |lo: f64, hi: f64| -> Vec<f64> {
        let (l, h) = (lo.log10(), hi.log10());
        (0..per_side)
            .map(|i| 10f64.powf(l + (h - l) * i as f64 / (per_side - 1) as f64))
            .collect()
    };
    let mut pts: Vec<f64> = logspace(-s.b1, -s.a1).into_iter().map(|x| -x).collect();
    pts.extend(logspace(s.a2, s.b2));
    pts
}

/// Round-trip and solve checks of a grid against its rational function.
pub fn check_grid(
    setup: &Setup,
    r: &Rkfun,
    grid: &FdGrid,
    u0: &[Complex64],
    pattern_residual: f64,
    digits: u32,
) -> Result<GridCheck, HarnessError> {
    let mut roundtrip: f64 = 0.0;
    if let Ok(s) = setup.operator.spectral_intervals() {
        for x in sample_points(&s, 100) {
            let lam = Complex64::new(x, 0.0);
            let (Ok(want), Ok(got)) = (r.eval_precise(lam, digits), cf_eval(grid, lam)) else {
                // sample on a pole of r; skipped
                continue;
            };
            roundtrip = roundtrip.max((want - got).norm() / want.norm());
        }
    }
    let sol = fd_solve(grid, &setup.operator, u0)?;
    let direct = r.apply(&setup.operator, u0)?;
    let fd_error = relative_error(&sol.b, &direct);
    let decay = sol.interior.last().map(|u| norm_f64(u) / norm_f64(u0));
    let passed = roundtrip <= 1e-8 && fd_error <= 1e-8 && pattern_residual <= 1e-25;
    Ok(GridCheck {
        roundtrip_error: roundtrip,
        fd_error,
        pattern_residual,
        decay,
        passed,
    })
}

/// Fits one degree, refitting with fresh vectors after breakdowns.
pub fn fit_degree(setup: &Setup, cfg: &ExperimentConfig, degree: usize, thickness: Option<f64>) -> FitOutcome {
    let size = setup.operator.size();
    let mut record = DegreeRecord {
        degree,
        thickness,
        training_misfit: None,
        test_error: None,
        iterations: 0,
        misfit_history: Vec::new(),
        stop_reason: None,
        lucky_breakdown: false,
        singular_value_tie: false,
        separated_poles: 0,
        attempts: 0,
        failure: None,
        grid: None,
    };
    let tag = thickness.map(|t| (t * 1000.0).round() as u64).unwrap_or(0);
    let seed = cfg.seed ^ (tag << 40);
    let f = |x: &[Complex64]| setup.apply(x);
    for attempt in 0..MAX_ATTEMPTS {
        record.attempts = attempt + 1;
        let v = match &setup.training {
            Some(v) if attempt == 0 => v.clone(),
            _ => setup.to_spectral(normal_vector(seed, stream_id(degree, attempt, 0), size)),
        };
        let u0 = setup.to_spectral(normal_vector(seed, stream_id(degree, attempt, 1), size));
        let (r, report) = match rkfit(&setup.operator, f, &v, degree, &RkfitOptions::default()) {
            Ok(x) => x,
            Err(e) => {
                record.failure = Some(e.to_string());
                continue;
            }
        };
        record.failure = report.failure.clone();
        record.training_misfit = Some(report.best_misfit);
        record.iterations = report.iterations;
        record.misfit_history = report.misfit_history.clone();
        record.stop_reason = Some(report.stop_reason);
        record.lucky_breakdown = report.lucky_breakdown;
        record.singular_value_tie = report.singular_value_tie;
        record.separated_poles = report.separated_poles;
        let test = (|| -> Result<f64, HarnessError> {
            let fu = setup.apply(&u0)?;
            let ru = r.apply(&setup.operator, &u0)?;
            Ok(relative_error(&ru, &fu))
        })();
        match test {
            Ok(e) if e.is_finite() => record.test_error = Some(e),
            Ok(_) => record.failure = Some("non-finite test error".into()),
            Err(e) => record.failure = Some(e.to_string()),
        }
        if !cfg.check_grids {
            return FitOutcome {
                record,
                rkfun: Some(r),
                grid: None,
            };
        }
        let opts = ConversionOptions {
            digits: cfg.digits,
            ..ConversionOptions::default()
        };
        match to_contfrac_with(&r, &opts) {
            Ok((grid, trace)) => {
                let pattern = (0..=6)
                    .map(|s| trace.pattern_residual(s))
                    .fold(crate::gridgen::final_residual(&trace), f64::max);
                match check_grid(setup, &r, &grid, &u0, pattern, cfg.digits) {
                    Ok(check) => record.grid = Some(check),
                    Err(e) => record.failure = Some(format!("grid check: {e}")),
                }
                return FitOutcome {
                    record,
                    rkfun: Some(r),
                    grid: Some(grid),
                };
            }
            Err(e) if e.is_retryable() && attempt + 1 < MAX_ATTEMPTS => {
                record.failure = Some(e.to_string());
                continue;
            }
            Err(e) => {
                record.failure = Some(format!("conversion: {e}"));
                return FitOutcome {
                    record,
                    rkfun: Some(r),
                    grid: None,
                };
            }
        }
    }
    FitOutcome {
        record,
        rkfun: None,
        grid: None,
    }
}

fn sweep(setup: &Setup, cfg: &ExperimentConfig, thickness: Option<f64>) -> Vec<DegreeRecord> {
    let degrees: Vec<usize> = (cfg.min_degree..=cfg.max_degree)
        .filter(|&n| n + 2 <= setup.operator.size())
        .collect();
    let pool = thread_pool();
    let mut records: Vec<DegreeRecord> = pool.install(|| {
        degrees
            .par_iter()
            .map(|&n| fit_degree(setup, cfg, n, thickness).record)
            .collect()
    });
    records.sort_by_key(|r| r.degree);
    records
}

fn rate_summary(setup: &Setup, records: &[DegreeRecord], thickness: Option<f64>) -> RateSummary {
    let intervals = setup.operator.spectral_intervals().ok();
    let errors: Vec<(usize, f64)> = records
        .iter()
        .filter_map(|d| d.test_error.map(|e| (d.degree, e)))
        .collect();
    let misfits: Vec<(usize, f64)> = records
        .iter()
        .filter_map(|d| d.training_misfit.map(|e| (d.degree, e)))
        .collect();
    RateSummary {
        thickness,
        spectral_intervals: intervals,
        predicted_rate: intervals.and_then(|s| predicted_rate_zolotarev(&s).ok()),
        fitted_geometric_rate: fit_geometric_rate(&errors).ok(),
        fitted_sqrt_rate: fit_sqrt_rate(&misfits).ok(),
    }
}

/// Smallest degree in `lo..=hi` whose test error is at most `tol`, by
/// bisection on the (statistically monotone) error curve.
fn minimal_degree(setup: &Setup, cfg: &ExperimentConfig, thickness: f64) -> Option<usize> {
    let ok = |n: usize| {
        fit_degree(setup, cfg, n, Some(thickness))
            .record
            .test_error
            .is_some_and(|e| e <= cfg.tol)
    };
    let (mut lo, mut hi) = (cfg.min_degree, cfg.max_degree.min(setup.operator.size() - 2));
    if !ok(hi) {
        return None;
    }
    while lo < hi {
        let mid = (lo + hi) / 2;
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Some(hi)
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ConvergenceReport, HarnessError> {
    cfg.validate()?;
    let mut report = ConvergenceReport::empty(cfg);
    match cfg.experiment {
        ExperimentId::PoleCount => {
            for t in cfg.thicknesses() {
                let offset = LAYER_OFFSETS.0;
                let pc = count_real_poles(t, offset)?;
                report.pole_counts.push(PoleCountRecord {
                    thickness: t,
                    offset,
                    count: pc.count,
                    floor: pc.floor,
                    roots: pc.roots,
                });
            }
        }
        ExperimentId::NyquistTable => {
            let reference = [(0.25, 8, 14), (0.5, 10, 11), (1.0, 16, 17), (2.0, 19, 28)];
            let search = ExperimentConfig {
                check_grids: false,
                ..cfg.clone()
            };
            for t in cfg.thicknesses() {
                let layers = [(t, LAYER_OFFSETS.0), (t, LAYER_OFFSETS.1)];
                let table = nyquist_count(&layers, setup::K_INF, NyquistVariant::Table)?;
                let s61 = Setup::new(ExperimentId::Vc61, cfg.small, Some(t))?;
                let s62 = Setup::new(ExperimentId::Vc62, cfg.small, Some(t))?;
                report.operator_size = Some(s61.operator.size());
                let row = reference.iter().find(|p| p.0 == t);
                report.nyquist.push(NyquistRow {
                    thickness: t,
                    nyquist_table: table,
                    nyquist_with_pi: nyquist_count(&layers, setup::K_INF, NyquistVariant::WithPi)?,
                    sem: std::f64::consts::FRAC_PI_2 * table,
                    vc61_degree: minimal_degree(&s61, &search, t),
                    vc62_degree: minimal_degree(&s62, &search, t),
                    reference_vc61: row.map_or(0, |p| p.1),
                    reference_vc62: row.map_or(0, |p| p.2),
                });
            }
        }
        ExperimentId::Vc61 | ExperimentId::Vc62 => {
            for t in cfg.thicknesses() {
                let setup = Setup::new(cfg.experiment, cfg.small, Some(t))?;
                report.operator_size = Some(setup.operator.size());
                let records = sweep(&setup, cfg, Some(t));
                report.rates.push(rate_summary(&setup, &records, Some(t)));
                report.degrees.extend(records);
            }
        }
        id => {
            let setup = Setup::new(id, cfg.small, cfg.thickness)?;
            report.operator_size = Some(setup.operator.size());
            let records = sweep(&setup, cfg, None);
            report.rates.push(rate_summary(&setup, &records, None));
            report.degrees = records;
        }
    }
    Ok(report)
}

/// Fits a single degree and returns a grid that passed its checks.
pub fn compute_grid(cfg: &ExperimentConfig, degree: usize) -> Result<(FdGrid, DegreeRecord), HarnessError> {
    cfg.validate()?;
    if matches!(cfg.experiment, ExperimentId::NyquistTable | ExperimentId::PoleCount) {
        return Err(HarnessError::Config(format!("{:?} produces no grid", cfg.experiment)));
    }
    let thickness = match cfg.experiment {
        ExperimentId::Vc61 | ExperimentId::Vc62 => Some(cfg.thickness.unwrap_or(1.0)),
        _ => None,
    };
    let setup = Setup::new(cfg.experiment, cfg.small, thickness)?;
    let cfg = ExperimentConfig {
        check_grids: true,
        ..cfg.clone()
    };
    let out = fit_degree(&setup, &cfg, degree, thickness);
    match (out.grid, &out.record.grid) {
        (Some(g), Some(check)) if check.passed => Ok((g, out.record)),
        (_, Some(check)) => Err(HarnessError::GridCheck(format!(
            "round trip {:e}, solve {:e}, pattern {:e}",
            check.roundtrip_error, check.fd_error, check.pattern_residual
        ))),
        _ => Err(HarnessError::GridCheck(
            out.record.failure.unwrap_or_else(|| "no grid produced".into()),
        )),
    }
}
