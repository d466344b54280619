use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataframe::DesignMatrix;
use crate::error::Result;
use crate::linalg::Qr;
use crate::linmod::criteria::{self, CriteriaInput, HasCriteria};
use crate::model::{Learner, Predictor};

/// Least-squares type fit (ordinary or ridge) with its diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub column_names: Vec<String>,
    pub has_intercept: bool,
    pub beta: Vec<f64>,
    pub fitted: Vec<f64>,
    pub residuals: Vec<f64>,
    pub rss: f64,
    /// `RSS / (n − df)`.
    pub sigma2_hat: f64,
    pub vcov: DMatrix<f64>,
    /// Trace of the smoother matrix.
    pub df: f64,
    /// Diagonal of the smoother (hat) matrix.
    pub hat_diag: Vec<f64>,
    /// Gaussian log-likelihood at the maximum-likelihood variance `RSS/n`.
    pub log_lik: f64,
    /// `−2 log_lik`.
    pub deviance: f64,
    pub r2: f64,
    pub adj_r2: f64,
    pub aic: f64,
    /// `None` when `n ≤ df + 1`.
    pub aicc: Option<f64>,
    pub bic: f64,
    pub cp: f64,
    pub n: usize,
    /// Ridge penalty, when the fit is penalized.
    pub lambda: Option<f64>,
    /// Coefficients on the internally standardized predictors (ridge only).
    pub beta_standardized: Option<Vec<f64>>,
}

impl LinearFit {
    /// Fills every diagnostic from the coefficients and smoother summary.
    pub(crate) fn assemble(
        dm: &DesignMatrix,
        beta: Vec<f64>,
        vcov_unscaled: DMatrix<f64>,
        hat_diag: Vec<f64>,
    ) -> Self {
        let n = dm.n_rows();
        let nf = n as f64;
        let b = DVector::from_column_slice(&beta);
        let fitted = &dm.x * &b;
        let residuals = &dm.y - &fitted;
        let rss = residuals.norm_squared();
        let df: f64 = hat_diag.iter().sum();
        let sigma2_hat = if nf > df { rss / (nf - df) } else { f64::NAN };
        let log_lik = -0.5 * nf * ((2.0 * PI * rss / nf).ln() + 1.0);
        let deviance = -2.0 * log_lik;
        let tss = if dm.has_intercept {
            let m = dm.y.mean();
            dm.y.iter().map(|v| (v - m).powi(2)).sum::<f64>()
        } else {
            dm.y.norm_squared()
        };
        let r2 = 1.0 - rss / tss;
        let adj_r2 = if dm.has_intercept {
            1.0 - (1.0 - r2) * (nf - 1.0) / (nf - df)
        } else {
            1.0 - (1.0 - r2) * nf / (nf - df)
        };
        let input = CriteriaInput { deviance, p: df, n, linear: Some((rss, sigma2_hat, df)) };
        Self {
            column_names: dm.column_names.clone(),
            has_intercept: dm.has_intercept,
            beta,
            fitted: fitted.as_slice().to_vec(),
            residuals: residuals.as_slice().to_vec(),
            rss,
            sigma2_hat,
            vcov: vcov_unscaled * sigma2_hat,
            df,
            hat_diag,
            log_lik,
            deviance,
            r2,
            adj_r2,
            aic: criteria::aic(&input),
            aicc: criteria::aicc(&input).ok(),
            bic: criteria::bic(&input),
            cp: criteria::mallows_cp(rss, sigma2_hat, df, n),
            n,
            lambda: None,
            beta_standardized: None,
        }
    }

    pub fn standard_errors(&self) -> Vec<f64> {
        (0..self.beta.len()).map(|j| self.vcov[(j, j)].sqrt()).collect()
    }

    /// Leave-one-out squared risk from the hat diagonal, `mean((eᵢ/(1−hᵢᵢ))²)`.
    pub fn loocv_risk(&self) -> f64 {
        loocv_shortcut(&self.residuals, &self.hat_diag)
    }
}

/// Leave-one-out squared risk of a linear smoother from its residuals and
/// smoother diagonal.
pub fn loocv_shortcut(residuals: &[f64], diag: &[f64]) -> f64 {
    residuals
        .iter()
        .zip(diag)
        .map(|(e, s)| (e / (1.0 - s)).powi(2))
        .sum::<f64>()
        / residuals.len() as f64
}

impl HasCriteria for LinearFit {
    fn criteria_input(&self) -> CriteriaInput {
        CriteriaInput {
            deviance: self.deviance,
            p: self.df,
            n: self.n,
            linear: Some((self.rss, self.sigma2_hat, self.df)),
        }
    }
}

impl Predictor for LinearFit {
    fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let b = DVector::from_column_slice(&self.beta);
        (x * b).as_slice().to_vec()
    }
}

/// Ordinary least squares through a QR factorization of the design.
pub fn fit_ols(dm: &DesignMatrix) -> Result<LinearFit> {
    let qr = Qr::new(&dm.x, &dm.column_names)?;
    if dm.n_rows() <= dm.n_cols() {
        return Err(crate::Error::InvalidArgument(format!(
            "OLS needs n > p (n = {}, p = {})",
            dm.n_rows(),
            dm.n_cols()
        )));
    }
    let beta = qr.solve(&dm.y).as_slice().to_vec();
    Ok(LinearFit::assemble(dm, beta, qr.xtx_inverse(), qr.leverages()))
}

#[derive(Debug, Clone, Default)]
pub struct OlsLearner {
    pub label: Option<String>,
}

impl Learner for OlsLearner {
    fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| "ols".into())
    }

    fn fit(&self, dm: &DesignMatrix) -> Result<Box<dyn Predictor>> {
        Ok(Box::new(fit_ols(dm)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Error;

    #[test]
    fn exact_line() {
        let dm = DesignMatrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0]], &[0.0, 1.0, 2.0], true)
            .unwrap();
        let fit = fit_ols(&dm).unwrap();
        assert!(fit.beta[0].abs() < 1e-12 && (fit.beta[1] - 1.0).abs() < 1e-12);
        assert!(fit.residuals.iter().all(|e| e.abs() < 1e-12));
        assert!((fit.r2 - 1.0).abs() < 1e-12);
        assert!((fit.df - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rank_deficiency_names_column() {
        let rows = vec![vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0], vec![4.0, 8.0]];
        let dm = DesignMatrix::from_rows(&rows, &[1.0, 2.0, 2.0, 5.0], true).unwrap();
        assert!(matches!(fit_ols(&dm), Err(Error::RankDeficient { column }) if column == "x2"));
    }

    #[test]
    fn loocv_shortcut_matches_refits() {
        let rows: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64, ((i * 7) % 5) as f64]).collect();
        let y: Vec<f64> = (0..12).map(|i| (i as f64).sqrt() + ((i * 3) % 4) as f64).collect();
        let dm = DesignMatrix::from_rows(&rows, &y, true).unwrap();
        let fit = fit_ols(&dm).unwrap();
        let mut direct = 0.0;
        for i in 0..12 {
            let keep: Vec<usize> = (0..12).filter(|&k| k != i).collect();
            let f = fit_ols(&dm.subset_rows(&keep)).unwrap();
            let pred = f.predict(&dm.x.select_rows(&[i]))[0];
            direct += (y[i] - pred).powi(2);
        }
        assert!((fit.loocv_risk() - direct / 12.0).abs() < 1e-10);
    }
}
