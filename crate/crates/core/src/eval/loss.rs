use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pointwise loss `ℓ(y, ŷ)` between an observation and a prediction.
///
/// `Hinge` and `Logistic` expect ±1 labels and a real-valued score;
/// `Misclass` expects 0/1 labels and classifies `ŷ > 0.5` as positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Loss {
    Squared,
    Absolute,
    Quantile { tau: f64 },
    Expectile { tau: f64 },
    Hinge,
    Logistic,
    Misclass,
}

fn check_tau(tau: f64) -> Result<f64> {
    if tau > 0.0 && tau < 1.0 {
        Ok(tau)
    } else {
        Err(Error::InvalidArgument(format!("tau must lie in (0, 1), got {tau}")))
    }
}

impl Loss {
    pub fn quantile(tau: f64) -> Result<Self> {
        Ok(Loss::Quantile { tau: check_tau(tau)? })
    }

    pub fn expectile(tau: f64) -> Result<Self> {
        Ok(Loss::Expectile { tau: check_tau(tau)? })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Loss::Quantile { tau } | Loss::Expectile { tau } => check_tau(tau).map(|_| ()),
            _ => Ok(()),
        }
    }

    /// Whether the loss is written for ±1 labels.
    pub fn uses_signed_labels(&self) -> bool {
        matches!(self, Loss::Hinge | Loss::Logistic)
    }

    pub fn value(&self, y: f64, yhat: f64) -> f64 {
        let asym = |tau: f64| if y <= yhat { 1.0 - tau } else { tau };
        match *self {
            Loss::Squared => (y - yhat).powi(2),
            Loss::Absolute => (y - yhat).abs(),
            Loss::Quantile { tau } => (y - yhat).abs() * asym(tau),
            Loss::Expectile { tau } => (y - yhat).powi(2) * asym(tau),
            Loss::Hinge => (1.0 - y * yhat).max(0.0),
            Loss::Logistic => softplus(-y * yhat),
            Loss::Misclass => {
                let class = if yhat > 0.5 { 1.0 } else { 0.0 };
                f64::from(u8::from(class != y))
            }
        }
    }

    /// A (sub)gradient of the loss with respect to the prediction `ŷ`.
    /// At kinks the left derivative is returned; `Misclass` has zero
    /// derivative almost everywhere.
    pub fn derivative(&self, y: f64, yhat: f64) -> f64 {
        let asym = |tau: f64| if y <= yhat { 1.0 - tau } else { tau };
        match *self {
            Loss::Squared => 2.0 * (yhat - y),
            Loss::Absolute => (yhat - y).signum() * f64::from(u8::from(yhat != y)),
            Loss::Quantile { tau } => {
                if yhat > y {
                    1.0 - tau
                } else if yhat < y {
                    -tau
                } else {
                    0.0
                }
            }
            Loss::Expectile { tau } => 2.0 * (yhat - y) * asym(tau),
            Loss::Hinge => {
                if y * yhat < 1.0 {
                    -y
                } else {
                    0.0
                }
            }
            Loss::Logistic => -y * sigmoid(-y * yhat),
            Loss::Misclass => 0.0,
        }
    }

    pub fn mean(&self, y: &[f64], yhat: &[f64]) -> f64 {
        debug_assert_eq!(y.len(), yhat.len());
        y.iter().zip(yhat).map(|(&a, &b)| self.value(a, b)).sum::<f64>() / y.len() as f64
    }
}

pub(crate) fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^t)` without overflow.
pub(crate) fn softplus(t: f64) -> f64 {
    if t > 30.0 {
        t + (-t).exp()
    } else {
        t.exp().ln_1p()
    }
}
