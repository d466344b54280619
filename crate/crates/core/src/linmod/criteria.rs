use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What a fit must expose to be scored by information criteria.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriteriaInput {
    /// `−2 log L` at the fitted parameters.
    pub deviance: f64,
    /// Number of fitted mean parameters, intercept included.
    pub p: f64,
    pub n: usize,
    /// `(RSS, σ̂², trace S)` for linear smoothers, enabling Mallows' Cp.
    pub linear: Option<(f64, f64, f64)>,
}

pub trait HasCriteria {
    fn criteria_input(&self) -> CriteriaInput;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Criteria {
    pub aic: f64,
    pub aicc: f64,
    pub bic: f64,
    /// Only defined for linear smoothers.
    pub cp: Option<f64>,
}

pub fn aic(input: &CriteriaInput) -> f64 {
    input.deviance + 2.0 * input.p
}

pub fn bic(input: &CriteriaInput) -> f64 {
    input.deviance + (input.n as f64).ln() * input.p
}

/// Small-sample corrected AIC; undefined when `n ≤ p + 1`.
pub fn aicc(input: &CriteriaInput) -> Result<f64> {
    let n = input.n as f64;
    if n <= input.p + 1.0 {
        return Err(Error::InvalidArgument(format!(
            "AICc needs n > p + 1 (n = {}, p = {})",
            input.n, input.p
        )));
    }
    Ok(input.deviance + 2.0 * input.p * n / (n - input.p - 1.0))
}

/// Empirical risk plus `2σ̂² trace(S)/n`.
pub fn mallows_cp(rss: f64, sigma2: f64, trace: f64, n: usize) -> f64 {
    let n = n as f64;
    rss / n + 2.0 * sigma2 * trace / n
}

pub fn information_criteria(fit: &impl HasCriteria) -> Result<Criteria> {
    let input = fit.criteria_input();
    Ok(Criteria {
        aic: aic(&input),
        aicc: aicc(&input)?,
        bic: bic(&input),
        cp: input.linear.map(|(rss, s2, tr)| mallows_cp(rss, s2, tr, input.n)),
    })
}
