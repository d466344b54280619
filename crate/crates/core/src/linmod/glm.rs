use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataframe::DesignMatrix;
use crate::error::{Error, Result};
use crate::eval::loss::sigmoid;
use crate::linalg::{independent_columns, weighted_lstsq};
use crate::linmod::criteria::{CriteriaInput, HasCriteria};
use crate::model::{Learner, Predictor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    GaussianIdentity,
    BinomialLogit,
    BinomialProbit,
    PoissonLog,
}

const MU_EPS: f64 = 1e-15;
const WEIGHT_FLOOR: f64 = 1e-10;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// `log Φ(x)`, switching to the asymptotic tail expansion far in the left tail.
pub fn log_norm_cdf(x: f64) -> f64 {
    if x > -30.0 {
        norm_cdf(x).ln()
    } else {
        let x2 = x * x;
        -0.5 * x2 - LN_SQRT_2PI - (-x).ln() + (1.0 - 1.0 / x2 + 3.0 / (x2 * x2)).ln()
    }
}

fn log_norm_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

impl Family {
    pub fn is_binomial(self) -> bool {
        matches!(self, Family::BinomialLogit | Family::BinomialProbit)
    }

    pub fn inverse_link(self, eta: f64) -> f64 {
        match self {
            Family::GaussianIdentity => eta,
            Family::BinomialLogit => sigmoid(eta).clamp(MU_EPS, 1.0 - MU_EPS),
            Family::BinomialProbit => norm_cdf(eta).clamp(MU_EPS, 1.0 - MU_EPS),
            Family::PoissonLog => eta.exp().max(f64::MIN_POSITIVE),
        }
    }

    pub fn link(self, mu: f64) -> f64 {
        match self {
            Family::GaussianIdentity => mu,
            Family::BinomialLogit => (mu / (1.0 - mu)).ln(),
            Family::BinomialProbit => probit(mu),
            Family::PoissonLog => mu.ln(),
        }
    }

    /// `sqrt(w)` and `sqrt(w)/μ′(η)` for the working weight `w = μ′²/V(μ)`,
    /// computed in log space so that extreme `η` stays finite.
    fn weight_terms(self, eta: f64, mu: f64) -> (f64, f64) {
        let (log_dmu, log_var) = match self {
            Family::GaussianIdentity => (0.0, 0.0),
            Family::BinomialLogit => {
                let v = mu * (1.0 - mu);
                (v.ln(), v.ln())
            }
            Family::BinomialProbit => {
                (log_norm_pdf(eta), log_norm_cdf(eta) + log_norm_cdf(-eta))
            }
            Family::PoissonLog => (mu.ln(), mu.ln()),
        };
        let log_w = (2.0 * log_dmu - log_var).max(WEIGHT_FLOOR.ln());
        let sw = (0.5 * log_w).exp();
        // bounded so floored weights cannot blow up the working response
        (sw, (0.5 * log_w - log_dmu).exp().min(1e10))
    }

    /// Unit deviance contribution `d(y, μ)`.
    pub fn unit_deviance(self, y: f64, mu: f64) -> f64 {
        let xlogx = |a: f64, b: f64| if a == 0.0 { 0.0 } else { a * (a / b).ln() };
        match self {
            Family::GaussianIdentity => (y - mu).powi(2),
            Family::BinomialLogit | Family::BinomialProbit => {
                2.0 * (xlogx(y, mu) + xlogx(1.0 - y, 1.0 - mu))
            }
            Family::PoissonLog => 2.0 * (xlogx(y, mu) - (y - mu)),
        }
    }

    fn check_response(self, y: &DVector<f64>) -> Result<()> {
        let bad = match self {
            Family::GaussianIdentity => None,
            Family::BinomialLogit | Family::BinomialProbit => {
                y.iter().position(|&v| v != 0.0 && v != 1.0)
            }
            Family::PoissonLog => y.iter().position(|&v| v < 0.0),
        };
        match bad {
            Some(i) => Err(Error::InvalidArgument(format!(
                "response value {} at row {i} is invalid for {self:?}",
                y[i]
            ))),
            None => Ok(()),
        }
    }

    fn initial_mu(self, y: f64) -> f64 {
        match self {
            Family::GaussianIdentity => y,
            Family::BinomialLogit | Family::BinomialProbit => (y + 0.5) / 2.0,
            Family::PoissonLog => y + 0.1,
        }
    }
}

/// Inverse of the standard normal CDF by Newton refinement of a bisection
/// bracket; only used to start IRLS.
fn probit(p: f64) -> f64 {
    let (mut lo, mut hi) = (-40.0, 40.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if norm_cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmOptions {
    /// Relative deviance change that ends the iterations.
    pub deviance_tol: f64,
    /// Largest relative coefficient change that ends the iterations.
    pub coef_tol: f64,
    pub max_iter: usize,
    /// Coefficient norm beyond which the fit is declared separated.
    pub divergence_norm: f64,
    /// Drop columns that are linear combinations of earlier ones (their
    /// coefficients are reported as 0) instead of failing.
    pub drop_aliased: bool,
}

impl Default for GlmOptions {
    fn default() -> Self {
        Self { deviance_tol: 1e-9, coef_tol: 1e-10, max_iter: 50, divergence_norm: 1e4, drop_aliased: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmFit {
    pub family: Family,
    pub column_names: Vec<String>,
    pub beta: Vec<f64>,
    pub linear_predictor: Vec<f64>,
    pub mu: Vec<f64>,
    pub deviance: f64,
    pub null_deviance: f64,
    pub log_lik: f64,
    /// `−2 log L + 2p`.
    pub aic: f64,
    /// Inverse Fisher information, scaled by the dispersion for the Gaussian family.
    pub vcov: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Set when coefficients diverge, typically under perfect separation.
    pub separation: bool,
    pub n: usize,
    /// Columns dropped as linear combinations of earlier columns.
    #[serde(default)]
    pub aliased: Vec<String>,
}

fn log_likelihood(family: Family, y: &DVector<f64>, mu: &[f64], deviance: f64) -> f64 {
    let n = y.len() as f64;
    match family {
        Family::GaussianIdentity => -0.5 * n * ((2.0 * PI * deviance / n).ln() + 1.0),
        Family::BinomialLogit | Family::BinomialProbit => -0.5 * deviance,
        Family::PoissonLog => y
            .iter()
            .zip(mu)
            .map(|(&yi, &m)| yi * m.ln() - m - libm::lgamma(yi + 1.0))
            .sum(),
    }
}

fn total_deviance(family: Family, y: &DVector<f64>, mu: &[f64]) -> f64 {
    y.iter().zip(mu).map(|(&yi, &m)| family.unit_deviance(yi, m)).sum()
}

/// Deviance of the model with an intercept only (or `η = 0` without one).
fn null_deviance(family: Family, dm: &DesignMatrix) -> f64 {
    let mu0 = if dm.has_intercept { dm.y.mean() } else { family.inverse_link(0.0) };
    let mu0 = if family.is_binomial() { mu0.clamp(MU_EPS, 1.0 - MU_EPS) } else { mu0 };
    let mu = vec![mu0; dm.n_rows()];
    total_deviance(family, &dm.y, &mu)
}

/// Generalized linear model by iteratively reweighted least squares: each
/// step regresses the working response `z = η + (y − μ)/μ′(η)` on the design
/// with weights `μ′²/V(μ)`.
pub fn fit_glm(dm: &DesignMatrix, family: Family) -> Result<GlmFit> {
    fit_glm_with(dm, family, &GlmOptions::default())
}

pub fn fit_glm_with(dm: &DesignMatrix, family: Family, opts: &GlmOptions) -> Result<GlmFit> {
    family.check_response(&dm.y)?;
    if opts.drop_aliased {
        let kept = independent_columns(&dm.x);
        if kept.len() < dm.n_cols() {
            return fit_without_aliased(dm, family, opts, &kept);
        }
    }
    let n = dm.n_rows();
    let p = dm.n_cols();
    if n < p {
        return Err(Error::InvalidArgument(format!("{p} columns but only {n} rows")));
    }
    let y = &dm.y;
    let mut eta: Vec<f64> = y.iter().map(|&v| family.link(family.initial_mu(v))).collect();
    let mut mu: Vec<f64> = eta.iter().map(|&e| family.inverse_link(e)).collect();
    let mut beta = DVector::zeros(p);
    let mut deviance = f64::INFINITY;
    let mut converged = false;
    let mut separation = false;
    let mut iterations = 0;
    let mut last_qr = None;

    while iterations < opts.max_iter {
        iterations += 1;
        let mut w = Vec::with_capacity(n);
        let mut z = DVector::zeros(n);
        for i in 0..n {
            let (sw, ratio) = family.weight_terms(eta[i], mu[i]);
            w.push(sw * sw);
            // z_i such that sqrt(w)·z_i = sqrt(w)·η + (y − μ)·sqrt(w)/μ′
            z[i] = eta[i] + (y[i] - mu[i]) * ratio / sw;
        }
        let (new_beta, qr) = weighted_lstsq(&dm.x, &z, &w, &dm.column_names)?;
        last_qr = Some(qr);
        let eta_new = &dm.x * &new_beta;
        eta = eta_new.as_slice().to_vec();
        mu = eta.iter().map(|&e| family.inverse_link(e)).collect();
        let dev_new = total_deviance(family, y, &mu);
        let coef_change = (&new_beta - &beta)
            .iter()
            .zip(new_beta.iter())
            .fold(0.0f64, |m, (d, b)| m.max(d.abs() / (1.0 + b.abs())));
        let dev_change = (dev_new - deviance).abs() / (dev_new.abs() + 0.1);
        beta = new_beta;
        deviance = dev_new;
        if beta.norm() > opts.divergence_norm || !deviance.is_finite() {
            separation = true;
            break;
        }
        if family == Family::GaussianIdentity
            || (dev_change < opts.deviance_tol && coef_change < opts.coef_tol)
        {
            converged = true;
            break;
        }
    }

    let qr = last_qr.expect("at least one IRLS iteration");
    let dispersion = if family == Family::GaussianIdentity {
        deviance / (n as f64 - p as f64)
    } else {
        1.0
    };
    let log_lik = log_likelihood(family, y, &mu, deviance);
    Ok(GlmFit {
        family,
        column_names: dm.column_names.clone(),
        beta: beta.as_slice().to_vec(),
        linear_predictor: eta,
        mu,
        deviance,
        null_deviance: null_deviance(family, dm),
        log_lik,
        aic: -2.0 * log_lik + 2.0 * p as f64,
        vcov: qr.xtx_inverse() * dispersion,
        iterations,
        converged,
        separation,
        n,
        aliased: Vec::new(),
    })
}

/// Fits on the `kept` columns and re-expands to the full design: aliased
/// coefficients are 0 and their covariance entries NaN.
fn fit_without_aliased(dm: &DesignMatrix, family: Family, opts: &GlmOptions, kept: &[usize]) -> Result<GlmFit> {
    let sub = dm.select_columns(kept);
    let fit = fit_glm_with(&sub, family, &GlmOptions { drop_aliased: false, ..opts.clone() })?;
    let p = dm.n_cols();
    let mut beta = vec![0.0; p];
    let mut vcov = DMatrix::from_element(p, p, f64::NAN);
    for (a, &i) in kept.iter().enumerate() {
        beta[i] = fit.beta[a];
        for (b, &j) in kept.iter().enumerate() {
            vcov[(i, j)] = fit.vcov[(a, b)];
        }
    }
    let aliased = (0..p).filter(|j| !kept.contains(j)).map(|j| dm.column_names[j].clone()).collect();
    Ok(GlmFit { column_names: dm.column_names.clone(), beta, vcov, aliased, ..fit })
}

impl GlmFit {
    pub fn predict_eta(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let b = DVector::from_column_slice(&self.beta);
        (x * b).as_slice().to_vec()
    }
}

impl Predictor for GlmFit {
    /// Fitted mean `μ = g⁻¹(xᵀβ)`.
    fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        self.predict_eta(x).into_iter().map(|e| self.family.inverse_link(e)).collect()
    }
}

impl HasCriteria for GlmFit {
    fn criteria_input(&self) -> CriteriaInput {
        CriteriaInput { deviance: -2.0 * self.log_lik, p: (self.beta.len() - self.aliased.len()) as f64, n: self.n, linear: None }
    }
}

#[derive(Debug, Clone)]
pub struct GlmLearner {
    pub family: Family,
    pub label: Option<String>,
    /// Drop aliased columns of each training design instead of failing.
    pub drop_aliased: bool,
}

impl Learner for GlmLearner {
    fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| match self.family {
            Family::GaussianIdentity => "gaussian glm".into(),
            Family::BinomialLogit => "logit".into(),
            Family::BinomialProbit => "probit".into(),
            Family::PoissonLog => "poisson".into(),
        })
    }

    fn fit(&self, dm: &DesignMatrix) -> Result<Box<dyn Predictor>> {
        let opts = GlmOptions { drop_aliased: self.drop_aliased, ..Default::default() };
        Ok(Box::new(fit_glm_with(dm, self.family, &opts)?))
    }

    fn is_classifier(&self) -> bool {
        self.family.is_binomial()
    }
}
