//! Uniform fit/predict contract shared by every estimator.

use nalgebra::DMatrix;

use crate::dataframe::DesignMatrix;
use crate::error::Result;

/// A fitted model. Rows of `x` must be laid out like the training design.
/// Classifiers return the probability of the positive class.
pub trait Predictor: Send + Sync {
    fn predict(&self, x: &DMatrix<f64>) -> Vec<f64>;
}

/// A model specification that can be fitted to a design.
pub trait Learner: Sync {
    fn label(&self) -> String;

    fn fit(&self, dm: &DesignMatrix) -> Result<Box<dyn Predictor>>;

    /// Classifiers need both classes in every training and validation block.
    fn is_classifier(&self) -> bool {
        false
    }
}

/// Learner built from a closure; handy for baselines and tests.
pub struct FnLearner<F> {
    label: String,
    classifier: bool,
    fit: F,
}

impl<F> FnLearner<F>
where
    F: Fn(&DesignMatrix) -> Result<Box<dyn Predictor>> + Sync,
{
    pub fn new(label: impl Into<String>, fit: F) -> Self {
        Self { label: label.into(), classifier: false, fit }
    }

    pub fn classifier(mut self) -> Self {
        self.classifier = true;
        self
    }
}

impl<F> Learner for FnLearner<F>
where
    F: Fn(&DesignMatrix) -> Result<Box<dyn Predictor>> + Sync,
{
    fn label(&self) -> String {
        self.label.clone()
    }

    fn fit(&self, dm: &DesignMatrix) -> Result<Box<dyn Predictor>> {
        (self.fit)(dm)
    }

    fn is_classifier(&self) -> bool {
        self.classifier
    }
}

/// Predicts one constant everywhere.
#[derive(Debug, Clone, Copy)]
pub struct ConstantPredictor(pub f64);

impl Predictor for ConstantPredictor {
    fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        vec![self.0; x.nrows()]
    }
}

/// Linear score `xᵀβ`, optionally passed through an inverse link.
#[derive(Debug, Clone)]
pub struct LinearPredictor {
    pub beta: Vec<f64>,
    pub inverse_link: Option<fn(f64) -> f64>,
}

impl Predictor for LinearPredictor {
    fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        (0..x.nrows())
            .map(|i| {
                let eta: f64 = self.beta.iter().enumerate().map(|(j, b)| b * x[(i, j)]).sum();
                self.inverse_link.map_or(eta, |f| f(eta))
            })
            .collect()
    }
}
