//! Training objectives shared by the boosting and neural-network backends.
//!
//! Both operate on a raw score. Under [`Loss::Squared`] the raw score is the
//! prediction itself; under [`Loss::Tweedie`] it is `eta = log(mu)`.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};
use crate::tweedie;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Loss {
    Squared,
    Tweedie { rho: f64 },
}

impl Loss {
    pub fn tweedie(rho: f64) -> Result<Self> {
        tweedie::check_fit_rho(rho)?;
        Ok(Loss::Tweedie { rho })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Loss::Squared => Ok(()),
            Loss::Tweedie { rho } => tweedie::check_fit_rho(rho),
        }
    }

    pub fn is_tweedie(&self) -> bool {
        matches!(self, Loss::Tweedie { .. })
    }

    pub fn value(&self, target: f64, raw: f64) -> f64 {
        match *self {
            Loss::Squared => 0.5 * (raw - target) * (raw - target),
            Loss::Tweedie { rho } => tweedie::loss(target, raw, rho),
        }
    }

    pub fn grad_hess(&self, target: f64, raw: f64) -> (f64, f64) {
        match *self {
            Loss::Squared => (raw - target, 1.0),
            Loss::Tweedie { rho } => tweedie::loss_grad_hess(target, raw, rho),
        }
    }

    /// Maps a raw score to the predicted mean of the target.
    pub fn mean(&self, raw: f64) -> f64 {
        match self {
            Loss::Squared => raw,
            Loss::Tweedie { .. } => raw.exp(),
        }
    }

    /// Constant raw score minimising the summed loss.
    ///
    /// Both objectives are minimised by the target mean in mean space, so the
    /// Tweedie score is `log(mean)`. An all-zero Tweedie target has no finite
    /// minimiser and is rejected.
    pub fn base_score(&self, targets: &[f64]) -> Result<f64> {
        if targets.is_empty() {
            return Err(Error::Argument("no targets".into()));
        }
        let mean = targets.iter().sum::<f64>() / targets.len() as f64;
        match self {
            Loss::Squared => Ok(mean),
            Loss::Tweedie { .. } if mean > 0.0 => Ok(mean.ln()),
            Loss::Tweedie { .. } => Err(Error::Data(
                "tweedie loss needs at least one positive target".into(),
            )),
        }
    }

    /// Targets must be finite, and nonnegative for the Tweedie loss.
    pub fn check_targets(&self, targets: &[f64]) -> Result<()> {
        for (i, &t) in targets.iter().enumerate() {
            if !t.is_finite() {
                return Err(Error::Data(format!("target {i} is not finite ({t})")));
            }
            if self.is_tweedie() && t < 0.0 {
                return Err(Error::Data(format!("target {i} is negative ({t})")));
            }
        }
        Ok(())
    }
}

impl fmt::Display for Loss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Loss::Squared => write!(f, "squared"),
            Loss::Tweedie { rho } => write!(f, "tweedie({rho})"),
        }
    }
}
