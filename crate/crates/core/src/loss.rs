//! Bounded, 1-Lipschitz losses on `[0, 1] x [0, 1]`.

use serde::{Deserialize, Serialize};

use crate::error::{check_unit, Result};
use crate::numeric::{sigmoid, softplus};

/// Default steepness of the scaled logistic loss.
pub const DEFAULT_LOGISTIC_C: f64 = 5.0;

/// The loss `l(y, u)` used both as the objective and, for bounded group
/// loss, as the constrained quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossSpec {
    /// `(y - u)^2 / 2`.
    HalfSquare,
    /// `ln(1 + exp(-C (2y - 1)(2u - 1))) / (2 ln(1 + e^C))`, with `C > 1`.
    ScaledLogistic { c: f64 },
}

impl Default for LossSpec {
    fn default() -> Self {
        LossSpec::HalfSquare
    }
}

impl LossSpec {
    pub fn scaled_logistic(c: f64) -> Result<Self> {
        if !(c > 1.0 && c.is_finite()) {
            return Err(crate::FairError::InvalidArgument(format!(
                "logistic steepness must be finite and > 1, got {c}"
            )));
        }
        Ok(LossSpec::ScaledLogistic { c })
    }

    /// Checked evaluation; both arguments must lie in `[0, 1]`.
    pub fn eval(&self, y: f64, u: f64) -> Result<f64> {
        check_unit("label", y)?;
        check_unit("prediction", u)?;
        Ok(self.value(y, u))
    }

    /// Unchecked evaluation. The formulas extend smoothly outside `[0, 1]`;
    /// the learners rely on that when optimizing unclipped scores.
    #[inline]
    pub fn value(&self, y: f64, u: f64) -> f64 {
        match *self {
            LossSpec::HalfSquare => 0.5 * (y - u) * (y - u),
            LossSpec::ScaledLogistic { c } => {
                softplus(-c * (2.0 * y - 1.0) * (2.0 * u - 1.0)) / (2.0 * softplus(c))
            }
        }
    }

    /// Checked derivative of `l(y, .)` at `u`.
    pub fn subderivative(&self, y: f64, u: f64) -> Result<f64> {
        check_unit("label", y)?;
        check_unit("prediction", u)?;
        Ok(self.derivative(y, u))
    }

    /// Derivative in the prediction argument (both shipped losses are smooth).
    #[inline]
    pub fn derivative(&self, y: f64, u: f64) -> f64 {
        match *self {
            LossSpec::HalfSquare => u - y,
            LossSpec::ScaledLogistic { c } => {
                let s = 2.0 * y - 1.0;
                -c * s * sigmoid(-c * s * (2.0 * u - 1.0)) / softplus(c)
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LossSpec::HalfSquare => "half_square",
            LossSpec::ScaledLogistic { .. } => "scaled_logistic",
        }
    }
}

/// Free-function form of [`LossSpec::eval`].
pub fn eval_loss(spec: LossSpec, y: f64, u: f64) -> Result<f64> {
    spec.eval(y, u)
}

/// Free-function form of [`LossSpec::subderivative`].
pub fn loss_subderivative(spec: LossSpec, y: f64, u: f64) -> Result<f64> {
    spec.subderivative(y, u)
}
