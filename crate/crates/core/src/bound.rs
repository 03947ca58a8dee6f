//! Rademacher bound on the generalization gap of a trained network.
//!
//! All logarithms are natural.

use crate::error::{Error, Result};
use crate::matrix::{operator_norm, Matrix};

/// Premise of the bound: every layer has operator norm at most 2.
pub const LAYER_NORM_LIMIT: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundInputs {
    /// `‖X‖`, operator norm of the `n × d_in` data matrix.
    pub x_norm: f64,
    pub n: usize,
    pub r: usize,
    pub layers: usize,
    pub d_in: usize,
    /// Almost-sure bound on `‖x‖`.
    pub b_x: f64,
    /// Almost-sure bound on `|y|`.
    pub b_y: f64,
    pub ell: f64,
    pub delta: f64,
}

/// Which logarithm multiplies the capacity term.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum LogFactor {
    /// `ln √n`, positive for `n > 1`.
    #[default]
    SqrtN,
    /// `ln(1/√n)` as printed; negative for `n > 1`.
    Printed,
}

/// Every intermediate of [`generalization_gap_bound`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GapBound {
    pub r_f: f64,
    pub rademacher: f64,
    pub m: f64,
    pub gap: f64,
    pub delta: f64,
}

fn check(inputs: &BoundInputs) -> Result<()> {
    if inputs.n < 2 {
        return Err(Error::InvalidArgument(alloc::format!(
            "the bound needs n >= 2 (ln n must be positive), got n = {}",
            inputs.n
        )));
    }
    if !(inputs.delta > 0.0 && inputs.delta < 1.0) {
        return Err(Error::InvalidArgument(alloc::format!("delta must lie in (0, 1), got {}", inputs.delta)));
    }
    let reals = [inputs.x_norm, inputs.b_x, inputs.b_y, inputs.ell];
    if reals.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidArgument("norms and bounds must be finite and non-negative".into()));
    }
    Ok(())
}

/// `R_F = d_in (2r)^L L³ ‖X‖² ln(2r²) ln n`.
pub fn capacity_r_f(inputs: &BoundInputs) -> Result<f64> {
    check(inputs)?;
    let r = inputs.r as f64;
    let l = inputs.layers as f64;
    Ok(inputs.d_in as f64
        * libm::pow(2.0 * r, l)
        * l
        * l
        * l
        * inputs.x_norm
        * inputs.x_norm
        * libm::log(2.0 * r * r)
        * libm::log(inputs.n as f64))
}

/// `4/(n√n) + ln(√n) · 12 √R_F / n`.
pub fn rademacher_bound(inputs: &BoundInputs, log: LogFactor) -> Result<f64> {
    let r_f = capacity_r_f(inputs)?;
    Ok(rademacher_from_capacity(r_f, inputs.n, log))
}

pub fn rademacher_from_capacity(r_f: f64, n: usize, log: LogFactor) -> f64 {
    let n = n as f64;
    let sqrt_n = libm::sqrt(n);
    let factor = match log {
        LogFactor::SqrtN => libm::log(sqrt_n),
        LogFactor::Printed => libm::log(1.0 / sqrt_n),
    };
    4.0 / (n * sqrt_n) + factor * 12.0 * libm::sqrt(r_f) / n
}

/// `M = B_Y + 2^L ℓ^{L-1} B_X`, the range of `|f(x) − y|` when every layer
/// norm is at most 2.
pub fn output_range_m(inputs: &BoundInputs) -> f64 {
    let l = inputs.layers as f64;
    inputs.b_y + libm::pow(2.0, l) * libm::pow(inputs.ell, l - 1.0) * inputs.b_x
}

/// `Gap ≤ 2M R(F) + 3M² √(ln(2/δ)/(2n))` with probability at least `1 − δ`.
pub fn generalization_gap_bound(inputs: &BoundInputs, log: LogFactor) -> Result<GapBound> {
    let r_f = capacity_r_f(inputs)?;
    let rademacher = rademacher_from_capacity(r_f, inputs.n, log);
    let m = output_range_m(inputs);
    let conf = libm::sqrt(libm::log(2.0 / inputs.delta) / (2.0 * inputs.n as f64));
    Ok(GapBound { r_f, rademacher, m, gap: 2.0 * m * rademacher + 3.0 * m * m * conf, delta: inputs.delta })
}

/// Whether every `‖W_j‖_op ≤ 2 + 1e-9`.
pub fn verify_norm_premise(weights: &[Matrix]) -> Result<bool> {
    for w in weights {
        if operator_norm(w)? > LAYER_NORM_LIMIT + 1e-9 {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs() -> BoundInputs {
        BoundInputs { x_norm: 1.0, n: 4, r: 2, layers: 2, d_in: 4, b_x: 1.0, b_y: 1.0, ell: 1.0, delta: 0.05 }
    }

    #[test]
    fn capacity_example() {
        let want = 512.0 * libm::log(8.0) * libm::log(4.0);
        let got = capacity_r_f(&inputs()).unwrap();
        assert!((got - want).abs() <= 1e-12 * want);
        assert!((got - 1475.96).abs() < 0.01);
    }

    #[test]
    fn rademacher_example() {
        let got = rademacher_bound(&inputs(), LogFactor::SqrtN).unwrap();
        assert!((got - 80.39).abs() < 0.01, "{got}");
        assert!(rademacher_bound(&inputs(), LogFactor::Printed).unwrap() < 0.0);
        assert_eq!(rademacher_from_capacity(0.0, 4, LogFactor::SqrtN), 0.5);
    }

    #[test]
    fn range_example() {
        assert_eq!(output_range_m(&BoundInputs { layers: 3, ..inputs() }), 9.0);
        assert_eq!(output_range_m(&BoundInputs { b_x: 0.0, ..inputs() }), 1.0);
    }

    #[test]
    fn refusals() {
        assert!(capacity_r_f(&BoundInputs { n: 1, ..inputs() }).is_err());
        assert!(generalization_gap_bound(&BoundInputs { delta: 1.0, ..inputs() }, LogFactor::SqrtN).is_err());
    }

    #[test]
    fn norm_premise() {
        assert!(verify_norm_premise(&[Matrix::identity(3)]).unwrap());
        assert!(!verify_norm_premise(&[Matrix::identity(3).scaled(10.0)]).unwrap());
    }
}
