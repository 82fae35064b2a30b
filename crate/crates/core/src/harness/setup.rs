//! Operators, DtN functions and training vectors of the experiments.
//!
//! Every experiment runs in the eigenbasis of its operator: the fits see a
//! diagonal operator holding the spectrum, and vectors are moved there with
//! the operator's orthogonal spectral transform. Norms, misfits and the
//! fitted rational functions are unchanged by this.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::{ExperimentId, HarnessError};
use crate::operators::{build_operator, DtnSpec, Operator, OperatorError, OperatorKind};

pub(crate) const K_INF: f64 = 15.0;

/// Offsets of the two finite layers in the variable-coefficient experiments.
pub const LAYER_OFFSETS: (f64, f64) = (-400.0, 125.0);

pub const NYQUIST_THICKNESSES: [f64; 4] = [0.25, 0.5, 1.0, 2.0];

const FULL_CELLS: usize = 150;
const SMALL_CELLS: usize = 50;
const SURROGATE_POINTS: usize = 100;

/// `c_j` for `j h < T` (first layer) and `j h < 2T` (second layer); the
/// homogeneous tail follows.
pub fn layer_offsets(thickness: f64, cells_per_unit: usize) -> Vec<f64> {
    let m = cells_per_unit as f64;
    let end = |t: f64| (t * m - 1e-9).ceil().max(0.0) as usize;
    let (first, second) = (end(thickness), end(2.0 * thickness));
    (0..second.max(1))
        .map(|j| if j < first { LAYER_OFFSETS.0 } else { LAYER_OFFSETS.1 })
        .collect()
}

fn logspace(lo: f64, hi: f64, m: usize) -> Vec<f64> {
    let (l, h) = (lo.log10(), hi.log10());
    (0..m)
        .map(|i| 10f64.powf(l + (h - l) * i as f64 / (m - 1) as f64))
        .collect()
}

/// `100` logspaced magnitudes per sign in `[a1, -1e-16]` and `[1e-16, b2]`.
fn surrogate_spectrum(a1: f64, b2: f64) -> Vec<f64> {
    let mut eigs: Vec<f64> = logspace(1e-16, -a1, SURROGATE_POINTS)
        .into_iter()
        .rev()
        .map(|x| -x)
        .collect();
    eigs.extend(logspace(1e-16, b2, SURROGATE_POINTS));
    eigs
}

/// Extreme eigenvalues of the shifted 2D Neumann Laplacian on `m x m` points.
fn kron_extremes(m: usize) -> (f64, f64) {
    let h = 1.0 / m as f64;
    let top = 2.0 - 2.0 * (PI * (m - 1) as f64 / m as f64).cos();
    (-K_INF * K_INF, 2.0 * top / (h * h) - K_INF * K_INF)
}

pub struct Setup {
    /// Diagonal operator holding the spectrum.
    pub operator: Operator,
    /// Operator in physical coordinates, absent for surrogate spectra.
    pub physical: Option<Operator>,
    pub spec: DtnSpec,
    /// DtN function tabulated on the spectrum.
    pub values: Vec<Complex64>,
    /// Fixed training vector in spectral coordinates, if the experiment prescribes one.
    pub training: Option<Vec<Complex64>>,
}

impl Setup {
    pub fn new(id: ExperimentId, small: bool, thickness: Option<f64>) -> Result<Self, HarnessError> {
        let cells = if small { SMALL_CELLS } else { FULL_CELLS };
        let h2d = 1.0 / cells as f64;
        let t = thickness.unwrap_or(1.0);
        let (physical, eigs, spec) = match id {
            ExperimentId::Ex51 => {
                let h = 1.0 / FULL_CELLS as f64;
                let a = build_operator(OperatorKind::Neumann1d, FULL_CELLS, h, K_INF)?;
                let eigs = a.eigenvalues().to_vec();
                (Some(a), eigs, DtnSpec::DiscreteConst { h })
            }
            ExperimentId::Ex52 => {
                let a = build_operator(OperatorKind::Kron2d, cells * cells, h2d, K_INF)?;
                let eigs = a.eigenvalues().to_vec();
                (Some(a), eigs, DtnSpec::DiscreteConst { h: h2d })
            }
            ExperimentId::Ex53 => {
                let (a1, b2) = kron_extremes(FULL_CELLS);
                (None, surrogate_spectrum(a1, b2), DtnSpec::Sqrt)
            }
            ExperimentId::Vc61 => {
                let a = build_operator(OperatorKind::Kron2d, cells * cells, h2d, K_INF)?;
                let eigs = a.eigenvalues().to_vec();
                let offsets = layer_offsets(t, cells);
                (Some(a), eigs, DtnSpec::DiscreteVariable { h: h2d, offsets })
            }
            ExperimentId::Vc62 => {
                let (a1, b2) = kron_extremes(cells);
                let offsets = layer_offsets(t, cells);
                (
                    None,
                    surrogate_spectrum(a1, b2),
                    DtnSpec::DiscreteVariable { h: h2d, offsets },
                )
            }
            ExperimentId::WaveguideFig1 => {
                let h = 1.0 / FULL_CELLS as f64;
                let a = build_operator(OperatorKind::Dirichlet1d, FULL_CELLS - 1, h, 14.0)?;
                let eigs = a.eigenvalues().to_vec();
                let offsets = vec![-81.0; FULL_CELLS + 1];
                (Some(a), eigs, DtnSpec::DiscreteVariable { h, offsets })
            }
            ExperimentId::NyquistTable | ExperimentId::PoleCount => {
                return Err(HarnessError::Config(format!("{id:?} has no operator")));
            }
        };
        let operator = Operator::diagonal(eigs)?;
        let values = operator.function(&spec)?.values().to_vec();
        let training = match id {
            ExperimentId::Ex53 => Some(vec![Complex64::new(1.0, 0.0); operator.size()]),
            _ => None,
        };
        Ok(Self {
            operator,
            physical,
            spec,
            values,
            training,
        })
    }

    /// `F x` for `x` in spectral coordinates.
    pub fn apply(&self, x: &[Complex64]) -> Result<Vec<Complex64>, OperatorError> {
        if x.len() != self.values.len() {
            return Err(OperatorError::Shape(format!(
                "vector of length {} for operator of size {}",
                x.len(),
                self.values.len()
            )));
        }
        Ok(x.iter().zip(&self.values).map(|(a, b)| a * b).collect())
    }

    /// Moves a physical-coordinate vector into the eigenbasis.
    pub fn to_spectral(&self, v: Vec<Complex64>) -> Vec<Complex64> {
        match &self.physical {
            Some(a) => a.to_spectral(&v).expect("vector has operator length"),
            None => v,
        }
    }
}
