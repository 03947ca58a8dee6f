//! Piecewise-linear activations and their slope constants.

use alloc::format;
use alloc::string::String;
use core::fmt;
use core::str::FromStr;

use crate::error::Error;
use crate::matrix::Matrix;

/// Element-wise activation σ.
///
/// Every kind satisfies `α (x₁ − x₂) ≤ σ(x₁) − σ(x₂) ≤ ℓ (x₁ − x₂)` for
/// `x₁ > x₂`, with `α` and `ℓ` given by [`Activation::alpha`] and
/// [`Activation::ell`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    /// `max{x, a x}` with `0 < a < 1`.
    LeakyRelu(f64),
    Relu,
    Identity,
}

/// Result of checking the strict-monotonicity requirement of the
/// convergence theory: `0 < α < 2`, finite `ℓ` and `σ(0) = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AssumptionCheck {
    pub holds: bool,
    pub alpha: f64,
    pub ell: f64,
}

impl Activation {
    /// Leaky ReLU with a validated slope.
    pub fn leaky_relu(slope: f64) -> Result<Self, Error> {
        if slope > 0.0 && slope < 1.0 {
            Ok(Activation::LeakyRelu(slope))
        } else {
            Err(Error::InvalidArgument(format!("leaky_relu slope must lie in (0, 1), got {slope}")))
        }
    }

    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::LeakyRelu(a) => {
                if x >= 0.0 {
                    x
                } else {
                    a * x
                }
            }
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Activation::Identity => x,
        }
    }

    /// σ'(x), with the kink at 0 resolved to 1.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::LeakyRelu(a) => {
                if x >= 0.0 {
                    1.0
                } else {
                    a
                }
            }
            Activation::Relu => {
                if x >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }

    pub fn apply_matrix(self, x: &Matrix) -> Matrix {
        x.map(|v| self.apply(v))
    }

    pub fn derivative_matrix(self, x: &Matrix) -> Matrix {
        x.map(|v| self.derivative(v))
    }

    /// Lower bound on σ'.
    pub fn alpha(self) -> f64 {
        match self {
            Activation::LeakyRelu(a) => a,
            Activation::Relu => 0.0,
            Activation::Identity => 1.0,
        }
    }

    /// Lipschitz constant of σ.
    pub fn ell(self) -> f64 {
        1.0
    }

    pub fn check_assumption(self) -> AssumptionCheck {
        let (alpha, ell) = (self.alpha(), self.ell());
        let holds = alpha > 0.0 && alpha < 2.0 && ell.is_finite() && self.apply(0.0) == 0.0;
        AssumptionCheck { holds, alpha, ell }
    }

    pub fn is_relu(self) -> bool {
        matches!(self, Activation::Relu)
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Activation::LeakyRelu(a) => write!(f, "leaky_relu:{a}"),
            Activation::Relu => f.write_str("relu"),
            Activation::Identity => f.write_str("identity"),
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let s = s.trim();
        match s {
            "relu" => return Ok(Activation::Relu),
            "identity" => return Ok(Activation::Identity),
            _ => {}
        }
        if let Some(slope) = s.strip_prefix("leaky_relu:") {
            let a: f64 = slope.trim().parse().map_err(|_| bad_tag(s))?;
            return Activation::leaky_relu(a);
        }
        Err(bad_tag(s))
    }
}

fn bad_tag(s: &str) -> Error {
    let msg: String = format!("unknown activation `{s}` (expected `leaky_relu:<slope>`, `relu` or `identity`)");
    Error::InvalidArgument(msg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    #[test]
    fn leaky_relu_values() {
        let a = Activation::LeakyRelu(0.5);
        assert_eq!([-2.0, 0.0, 3.0].map(|x| a.apply(x)), [-1.0, 0.0, 3.0]);
        assert_eq!([-2.0, 3.0].map(|x| a.derivative(x)), [0.5, 1.0]);
        assert_eq!(a.derivative(0.0), 1.0);
    }

    #[test]
    fn relu_and_identity_values() {
        let r = Activation::Relu;
        assert_eq!([-1.0, 2.0].map(|x| r.apply(x)), [0.0, 2.0]);
        assert_eq!([-2.0, 3.0].map(|x| r.derivative(x)), [0.0, 1.0]);
        let id = Activation::Identity;
        assert_eq!(id.apply(-7.25), -7.25);
        assert_eq!(id.derivative(-7.25), 1.0);
    }

    #[test]
    fn assumption_certificates() {
        let c = Activation::LeakyRelu(0.5).check_assumption();
        assert!(c.holds);
        assert_eq!((c.alpha, c.ell), (0.5, 1.0));
        assert!(!Activation::Relu.check_assumption().holds);
        let c = Activation::Identity.check_assumption();
        assert!(c.holds);
        assert_eq!((c.alpha, c.ell), (1.0, 1.0));
    }

    #[test]
    fn tags_round_trip() {
        for tag in ["leaky_relu:0.5", "relu", "identity", "leaky_relu:0.01"] {
            let a: Activation = tag.parse().unwrap();
            assert_eq!(a.to_string(), tag);
        }
        assert!("leaky_relu:1.5".parse::<Activation>().is_err());
        assert!("tanh".parse::<Activation>().is_err());
        assert!("leaky_relu:".parse::<Activation>().is_err());
    }
}
