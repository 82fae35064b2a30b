//! Scalar DtN functions of layered waveguides.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::OperatorError;

/// Denominator magnitude below which a continued-fraction evaluation is
/// treated as hitting a pole.
pub const DEFAULT_POLE_THRESHOLD: f64 = 1e-300;

/// Square root continued through the upper half plane.
///
/// Agrees with the principal root except on the negative real axis (including
/// a negative zero imaginary part), where `+i sqrt(|z|)` is returned.
pub fn branch_sqrt(z: Complex64) -> Complex64 {
    if z.im == 0.0 && z.re < 0.0 {
        Complex64::new(0.0, (-z.re).sqrt())
    } else {
        z.sqrt()
    }
}

/// Layer description selecting one of the scalar DtN functions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum DtnSpec {
    /// `f(l) = sqrt(l)`.
    Sqrt,
    /// Homogeneous three-point scheme with step `h`.
    DiscreteConst { h: f64 },
    /// Three-point scheme with offsets `c_0..c_L` followed by a homogeneous half-line.
    DiscreteVariable { h: f64, offsets: Vec<f64> },
    /// One continuous layer of thickness `thickness` and offset `offset` on a half-line.
    ContinuousLayered { thickness: f64, offset: f64 },
}

impl DtnSpec {
    pub fn validate(&self) -> Result<(), OperatorError> {
        let bad = |msg: String| Err(OperatorError::InvalidSpec(msg));
        match self {
            DtnSpec::Sqrt => Ok(()),
            DtnSpec::DiscreteConst { h } => {
                if !(h.is_finite() && *h > 0.0) {
                    return bad(format!("step h must be positive, got {h}"));
                }
                Ok(())
            }
            DtnSpec::DiscreteVariable { h, offsets } => {
                if !(h.is_finite() && *h > 0.0) {
                    return bad(format!("step h must be positive, got {h}"));
                }
                if offsets.is_empty() {
                    return bad("at least one offset c_0 is required".into());
                }
                if let Some(c) = offsets.iter().find(|c| !c.is_finite()) {
                    return bad(format!("offset {c} is not finite"));
                }
                Ok(())
            }
            DtnSpec::ContinuousLayered { thickness, offset } => {
                if !(thickness.is_finite() && *thickness > 0.0) {
                    return bad(format!("thickness must be positive, got {thickness}"));
                }
                if !offset.is_finite() {
                    return bad(format!("offset {offset} is not finite"));
                }
                Ok(())
            }
        }
    }
}

fn checked_inv(x: Complex64, lambda: Complex64, threshold: f64) -> Result<Complex64, OperatorError> {
    if !(x.norm() > threshold) {
        return Err(OperatorError::NearPole { lambda });
    }
    Ok(x.inv())
}

/// `f_h(l) = sqrt(l) * sqrt(1 + h^2 l / 4)`.
pub fn discrete_const(h: f64, lambda: Complex64) -> Complex64 {
    branch_sqrt(lambda) * branch_sqrt(1.0 + h * h * lambda / 4.0)
}

/// Hyperbolic tangent for arguments with nonnegative real part, without overflow.
fn tanh_right(w: Complex64) -> Complex64 {
    if w.re < 0.0 {
        return -tanh_right(-w);
    }
    let e = (-2.0 * w).exp();
    (1.0 - e) / (1.0 + e)
}

pub fn dtn_scalar(spec: &DtnSpec, lambda: Complex64) -> Result<Complex64, OperatorError> {
    dtn_scalar_with_threshold(spec, lambda, DEFAULT_POLE_THRESHOLD)
}

pub fn dtn_scalar_with_threshold(
    spec: &DtnSpec,
    lambda: Complex64,
    threshold: f64,
) -> Result<Complex64, OperatorError> {
    let value = match spec {
        DtnSpec::Sqrt => branch_sqrt(lambda),
        DtnSpec::DiscreteConst { h } => discrete_const(*h, lambda),
        DtnSpec::DiscreteVariable { h, offsets } => {
            let h = *h;
            let mut x = h * lambda / 2.0 + discrete_const(h, lambda);
            for &c in offsets[1..].iter().rev() {
                let inner = h + checked_inv(x, lambda, threshold)?;
                x = h * (lambda + c) + checked_inv(inner, lambda, threshold)?;
            }
            let inner = h + checked_inv(x, lambda, threshold)?;
            h * (lambda + offsets[0]) / 2.0 + checked_inv(inner, lambda, threshold)?
        }
        DtnSpec::ContinuousLayered { thickness, offset } => {
            let s = branch_sqrt(lambda + offset);
            let r = branch_sqrt(lambda);
            if s == Complex64::new(0.0, 0.0) {
                // limit s -> 0 of s (s t + r) / (s + r t) with t ~ T s
                r * checked_inv(1.0 + r * thickness, lambda, threshold)?
            } else {
                let t = tanh_right(s * thickness);
                s * (s * t + r) * checked_inv(s + r * t, lambda, threshold)?
            }
        }
    };
    if !(value.re.is_finite() && value.im.is_finite()) {
        return Err(OperatorError::NearPole { lambda });
    }
    Ok(value)
}

/// Real poles of the continuous one-layer DtN function.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PoleCount {
    pub count: usize,
    /// Pole locations in `(0, -c)`, ascending.
    pub roots: Vec<f64>,
    /// `floor(T sqrt(-c) / pi)`; the count is this value or one more.
    pub floor: usize,
}

/// Samples per `pi / T` cell of the sign-change scan.
const SAMPLES_PER_CELL: usize = 256;

/// `Im h(z) = z cos(Tz) + sqrt(-c - z^2) sin(Tz)` for `0 < z < sqrt(-c)`.
fn pole_indicator(thickness: f64, offset: f64, z: f64) -> f64 {
    z * (thickness * z).cos() + (-offset - z * z).max(0.0).sqrt() * (thickness * z).sin()
}

/// Counts the real poles of the continuous layered DtN function by a
/// sign-change scan and checks the count against `floor(T sqrt(-c)/pi) + {0, 1}`.
pub fn count_real_poles(thickness: f64, offset: f64) -> Result<PoleCount, OperatorError> {
    DtnSpec::ContinuousLayered { thickness, offset }.validate()?;
    if offset >= 0.0 {
        return Ok(PoleCount {
            count: 0,
            roots: Vec::new(),
            floor: 0,
        });
    }
    let zmax = (-offset).sqrt();
    let cells = thickness * zmax / std::f64::consts::PI;
    let floor = cells.floor() as usize;
    let samples = SAMPLES_PER_CELL * (cells.ceil() as usize + 1);
    let g = |z: f64| pole_indicator(thickness, offset, z);

    let mut roots = Vec::new();
    // g > 0 just to the right of z = 0
    let mut z_prev = 0.0;
    let mut g_prev = 1.0;
    for k in 1..=samples {
        let z = zmax * k as f64 / samples as f64;
        let gz = g(z);
        if gz == 0.0 {
            if k < samples {
                roots.push(z);
            }
            // a root exactly at z = sqrt(-c) is the excluded endpoint l = 0
            z_prev = z;
            g_prev = if k < samples {
                g(z + 0.5 * zmax / samples as f64)
            } else {
                gz
            };
            continue;
        }
        if g_prev != 0.0 && (gz > 0.0) != (g_prev > 0.0) {
            let (mut lo, mut hi) = (z_prev, z);
            let lo_pos = g_prev > 0.0;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if (g(mid) > 0.0) == lo_pos {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        z_prev = z;
        g_prev = gz;
    }

    let mut lambdas: Vec<f64> = roots.iter().map(|z| -offset - z * z).collect();
    lambdas.retain(|&l| l > 0.0 && l < -offset);
    lambdas.sort_by(f64::total_cmp);
    let count = lambdas.len();
    if count != floor && count != floor + 1 {
        return Err(OperatorError::PoleCountBracket { count, floor });
    }
    Ok(PoleCount {
        count,
        roots: lambdas,
        floor,
    })
}
