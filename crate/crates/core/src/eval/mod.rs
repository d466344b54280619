//! Losses, classification metrics and resampling-based risk estimates.

pub mod classify;
pub mod cv;
pub mod loss;

pub use classify::{
    confusion_at, kappa, optimal_cutoff, roc, ConfusionMatrix, Cutoff, RocCurve, RocPoint,
};
pub use cv::{bootstrap_validate, cross_validate, BootstrapReport, CvReport};
pub use loss::Loss;
