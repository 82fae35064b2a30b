//! Convergence-rate predictors and the Nyquist-type resolution count.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::operators::SpectralIntervals;

/// Geometric convergence factor per degree of the best type `(n, n-1)`
/// approximant of the square root on `[a1, b1] U [a2, b2]`.
pub fn predicted_rate_zolotarev(s: &SpectralIntervals) -> Result<f64, HarnessError> {
    let SpectralIntervals { a1, b1, a2, b2 } = *s;
    if !(a1 < b1 && b1 < 0.0 && 0.0 < a2 && a2 < b2) {
        return Err(HarnessError::NotIndefinite(*s));
    }
    let ratio = 256.0 * (a1 * b2) / (a2 * b1);
    let log = ratio.ln();
    if !(log > 0.0 && log.is_finite()) {
        return Err(HarnessError::NotIndefinite(*s));
    }
    Ok((-2.0 * PI * PI / log).exp())
}

/// Least-squares exponent `g` in `error ~ C exp(-g sqrt(n))`.
///
/// Points with errors at or below `1e-13` are discarded as roundoff-dominated.
pub fn fit_sqrt_rate(errors: &[(usize, f64)]) -> Result<f64, HarnessError> {
    let pts: Vec<(f64, f64)> = errors
        .iter()
        .filter(|(_, e)| e.is_finite() && *e > 1e-13)
        .map(|&(n, e)| ((n as f64).sqrt(), e.ln()))
        .collect();
    if pts.len() < 8 {
        return Err(HarnessError::InsufficientData {
            needed: 8,
            got: pts.len(),
        });
    }
    Ok(-least_squares_slope(&pts))
}

/// Per-degree factor `q` in `error ~ C q^n` fitted by least squares.
pub fn fit_geometric_rate(errors: &[(usize, f64)]) -> Result<f64, HarnessError> {
    let pts: Vec<(f64, f64)> = errors
        .iter()
        .filter(|(_, e)| e.is_finite() && *e > 0.0)
        .map(|&(n, e)| (n as f64, e.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(HarnessError::InsufficientData {
            needed: 2,
            got: pts.len(),
        });
    }
    Ok(least_squares_slope(&pts).exp())
}

fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NyquistVariant {
    /// `pi^{-1} sum T sqrt(k^2 - c)`.
    WithPi,
    /// `sum T sqrt(k^2 - c)`, the variant matching the tabulated counts.
    Table,
}

/// Nyquist-type count for layers given as `(thickness, offset)`.
pub fn nyquist_count(layers: &[(f64, f64)], k_inf: f64, variant: NyquistVariant) -> Result<f64, HarnessError> {
    let mut total = 0.0;
    for &(t, c) in layers {
        let s = k_inf * k_inf - c;
        if s < 0.0 {
            return Err(HarnessError::Evanescent { offset: c });
        }
        total += t * s.sqrt();
    }
    Ok(match variant {
        NyquistVariant::WithPi => total / PI,
        NyquistVariant::Table => total,
    })
}
