use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataframe::DesignMatrix;
use crate::error::{Error, Result};
use crate::eval::loss::{sigmoid, Loss};
use crate::model::{Learner, Predictor};

/// Step size `γ_t = γ₀ / (1 + decay · t)`, with `t` counted in epochs
/// (fractional within an epoch).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub gamma0: f64,
    pub decay: f64,
}

impl Schedule {
    pub fn at(&self, t: f64) -> f64 {
        self.gamma0 / (1.0 + self.decay * t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdOptions {
    pub loss: Loss,
    pub epochs: usize,
    pub schedule: Schedule,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdFit {
    pub column_names: Vec<String>,
    pub loss: Loss,
    pub beta: Vec<f64>,
    /// Training risk before the first epoch and after each epoch.
    pub risk_trace: Vec<f64>,
    pub epochs: usize,
    pub seed: u64,
}

fn score(x: &DMatrix<f64>, i: usize, beta: &[f64]) -> f64 {
    beta.iter().enumerate().map(|(j, b)| b * x[(i, j)]).sum()
}

/// Stochastic (sub)gradient descent on the empirical risk of a linear score:
/// each epoch visits the rows in a fresh random order and takes one step
/// `β ← β − γ_t ∂ℓ(yᵢ, xᵢᵀβ)/∂β` per row. Hinge and logistic losses see the
/// ±1 view of a 0/1 response.
pub fn fit_sgd(dm: &DesignMatrix, opts: &SgdOptions) -> Result<SgdFit> {
    opts.loss.validate()?;
    if matches!(opts.loss, Loss::Misclass) {
        return Err(Error::InvalidArgument("misclassification loss has no useful gradient".into()));
    }
    if !(opts.schedule.gamma0 > 0.0) || opts.schedule.decay < 0.0 {
        return Err(Error::InvalidArgument("learning rate must be positive".into()));
    }
    let y: Vec<f64> = if opts.loss.uses_signed_labels() {
        if !dm.is_binary() {
            return Err(Error::InvalidArgument(format!("{:?} loss needs a 0/1 response", opts.loss)));
        }
        dm.signed_y()
    } else {
        dm.y.as_slice().to_vec()
    };
    let n = dm.n_rows();
    let p = dm.n_cols();
    let risk = |beta: &[f64]| {
        (0..n).map(|i| opts.loss.value(y[i], score(&dm.x, i, beta))).sum::<f64>() / n as f64
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut beta = vec![0.0; p];
    let mut order: Vec<usize> = (0..n).collect();
    let mut risk_trace = vec![risk(&beta)];
    let mut step = 0usize;
    for epoch in 0..opts.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let gamma = opts.schedule.at(step as f64 / n as f64);
            let g = opts.loss.derivative(y[i], score(&dm.x, i, &beta));
            if g != 0.0 {
                for (j, b) in beta.iter_mut().enumerate() {
                    *b -= gamma * g * dm.x[(i, j)];
                }
            }
            step += 1;
        }
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::NonFinite(epoch));
        }
        risk_trace.push(risk(&beta));
    }
    Ok(SgdFit {
        column_names: dm.column_names.clone(),
        loss: opts.loss,
        beta,
        risk_trace,
        epochs: opts.epochs,
        seed: opts.seed,
    })
}

impl Predictor for SgdFit {
    /// Linear score; probability of the positive class under logistic loss.
    fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        (0..x.nrows())
            .map(|i| {
                let s = score(x, i, &self.beta);
                if matches!(self.loss, Loss::Logistic) {
                    sigmoid(s)
                } else {
                    s
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct SgdLearner {
    pub options: SgdOptions,
}

impl Learner for SgdLearner {
    fn label(&self) -> String {
        format!("sgd({:?})", self.options.loss)
    }

    fn fit(&self, dm: &DesignMatrix) -> Result<Box<dyn Predictor>> {
        Ok(Box::new(fit_sgd(dm, &self.options)?))
    }

    fn is_classifier(&self) -> bool {
        self.options.loss.uses_signed_labels()
    }
}
