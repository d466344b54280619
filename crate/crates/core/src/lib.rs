//! Econometric and machine-learning estimators side by side.
//!
//! Parametric fits (least squares, ridge, lasso, GLMs, SGD), nonparametric
//! smoothers and additive models, trees and their ensembles, support vector
//! machines and small neural networks all consume one [`DesignMatrix`] and
//! are compared through the shared [`eval`] layer.

pub mod dataframe;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod linmod;
pub mod mlp;
pub mod model;
pub mod nonparam;
pub mod svm;
pub mod trees;

pub use dataframe::{DesignMatrix, Dataset};
pub use error::{Error, Result};
