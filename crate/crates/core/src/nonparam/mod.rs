//! Kernel and neighbourhood smoothers, smoother diagnostics and additive
//! models fitted by backfitting.

pub mod additive;
pub mod kernel;
pub mod knn;
pub mod spline;

pub use additive::{
    fit_additive, AdditiveFit, AdditiveLearner, AdditiveOptions, Component, ComponentModel,
    SmootherSpec,
};
pub use kernel::{log_grid, select_bandwidth, BandwidthSelection, Kernel, KernelLearner, KernelSmoother};
pub use knn::{knn_predict, Knn, KnnLearner};
pub use spline::{BSplineBasis, PSpline};

use crate::error::Result;
use crate::linmod::LinearFit;

/// Models whose fitted values are a fixed linear map `ŷ = S y` of the
/// response. Other models report `Error::NotLinearSmoother`.
pub trait Smoother {
    /// Diagonal `s_ii` of the smoother matrix at the training inputs.
    fn smoother_diagonal(&self) -> Result<Vec<f64>>;
}

impl Smoother for LinearFit {
    fn smoother_diagonal(&self) -> Result<Vec<f64>> {
        Ok(self.hat_diag.clone())
    }
}

/// `trace(S) = Σ s_ii`, the effective number of parameters.
pub fn smoother_trace(model: &dyn Smoother) -> Result<f64> {
    Ok(model.smoother_diagonal()?.iter().sum())
}
