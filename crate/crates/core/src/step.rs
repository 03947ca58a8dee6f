//! How nominal step sizes turn into the multipliers the update rules use.

use crate::activation::Activation;
use crate::error::Result;
use crate::matrix::{operator_norm, Matrix};

/// Interpretation of the step sizes in a [`crate::TrainSchedule`].
///
/// Every update has the form `block ← block − c · η' · ∇`, where `c` is `γ`
/// for the hidden and first-layer blocks and `1` for the output blocks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum StepScaling {
    /// `η' = η`, the update rules exactly as written.
    #[default]
    Raw,
    /// `η' = η / (c · L_block)` where `L_block` bounds the curvature of the
    /// block's unweighted loss, so `η = 1` is a full step for every block
    /// regardless of width, sample count or γ.
    ///
    /// | block | `L_block` |
    /// |---|---|
    /// | `W_L` | `2‖V_{L-1}‖²` |
    /// | `V_{L-1,i}` | `2‖W_L‖²` |
    /// | `W_j` | `2ℓ²‖V_{j-1}‖²` |
    /// | `V_{j-1,i}` | `2ℓ²‖W_j‖²`, or `2(1 + ℓ‖W_j‖)²` with a skip term |
    /// | `W_1` | `2ℓ²‖X‖²`, `2‖X‖²` for the linear first layer |
    Smoothness,
}

impl core::fmt::Display for StepScaling {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            StepScaling::Raw => "raw",
            StepScaling::Smoothness => "smoothness",
        })
    }
}

impl core::str::FromStr for StepScaling {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "raw" => Ok(StepScaling::Raw),
            "smoothness" => Ok(StepScaling::Smoothness),
            other => Err(crate::Error::InvalidArgument(alloc::format!(
                "unknown step scaling `{other}` (expected `raw` or `smoothness`)"
            ))),
        }
    }
}

/// Guards against dividing by a vanishing curvature bound.
fn inv(l: f64) -> f64 {
    if l > f64::MIN_POSITIVE {
        1.0 / l
    } else {
        0.0
    }
}

impl StepScaling {
    pub fn output_weights(self, eta: f64, v: &Matrix) -> Result<f64> {
        match self {
            StepScaling::Raw => Ok(eta),
            StepScaling::Smoothness => {
                let n = operator_norm(v)?;
                Ok(eta * inv(2.0 * n * n))
            }
        }
    }

    pub fn output_aux(self, eta: f64, w_l: &Matrix) -> f64 {
        match self {
            StepScaling::Raw => eta,
            StepScaling::Smoothness => eta * inv(2.0 * w_l.frobenius_norm_sq()),
        }
    }

    pub fn hidden_weights(self, eta: f64, gamma: f64, v_prev: &Matrix, act: Activation) -> Result<f64> {
        match self {
            StepScaling::Raw => Ok(eta),
            StepScaling::Smoothness => {
                let n = operator_norm(v_prev)? * act.ell();
                Ok(eta * inv(gamma * 2.0 * n * n))
            }
        }
    }

    pub fn hidden_aux(self, eta: f64, gamma: f64, w: &Matrix, act: Activation, skip: bool) -> Result<f64> {
        match self {
            StepScaling::Raw => Ok(eta),
            StepScaling::Smoothness => {
                let n = operator_norm(w)? * act.ell();
                let l = if skip { 2.0 * (1.0 + n) * (1.0 + n) } else { 2.0 * n * n };
                Ok(eta * inv(gamma * l))
            }
        }
    }

    /// `x_norm` is `‖X‖` (operator norm), computed once per run by the caller.
    pub fn first_weights(self, eta: f64, gamma: f64, x_norm: f64, ell: f64) -> f64 {
        match self {
            StepScaling::Raw => eta,
            StepScaling::Smoothness => {
                let n = x_norm * ell;
                eta * inv(gamma * 2.0 * n * n)
            }
        }
    }
}
