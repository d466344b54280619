//! Parametric estimators: least squares, ridge, lasso, best subset, GLMs,
//! stochastic gradient descent and criterion-based selection.

pub mod criteria;
pub mod glm;
pub mod lasso;
pub mod ols;
pub mod ridge;
pub mod sgd;
pub mod stepwise;
pub mod subset;

pub use criteria::{information_criteria, Criteria, CriteriaInput, HasCriteria};
pub use glm::{fit_glm, fit_glm_with, Family, GlmFit, GlmLearner, GlmOptions};
pub use lasso::{fit_lasso, lambda_max, LassoLearner, LassoOptions, LassoPath};
pub use ols::{fit_ols, loocv_shortcut, LinearFit, OlsLearner};
pub use ridge::{fit_ridge, RidgeLearner};
pub use sgd::{fit_sgd, Schedule, SgdFit, SgdLearner, SgdOptions};
pub use stepwise::{stepwise, Criterion, Direction, StepwiseTrace};
pub use subset::{best_subset, subset_rss, SubsetChoice};
