use nalgebra::{DMatrix, DVector};

use crate::dataframe::{DesignMatrix, Standardization};
use crate::error::{Error, Result};
use crate::linmod::ols::LinearFit;
use crate::model::{Learner, Predictor};

/// Predictors standardized with population moments (centered when the
/// design has an intercept) and the matching response.
pub(crate) struct Standardized {
    pub z: DMatrix<f64>,
    pub y: DVector<f64>,
    pub y_mean: f64,
    pub st: Standardization,
    pub cols: Vec<usize>,
}

pub(crate) fn standardize(dm: &DesignMatrix) -> Standardized {
    let cols = dm.predictor_columns();
    let sub = dm.x.select_columns(&cols);
    let st = Standardization::fit(&sub, dm.has_intercept);
    let z = st.apply(&sub);
    let y_mean = if dm.has_intercept { dm.y.mean() } else { 0.0 };
    let y = dm.y.map(|v| v - y_mean);
    Standardized { z, y, y_mean, st, cols }
}

/// Maps standardized slopes back to the original columns, intercept first.
pub(crate) fn destandardize(dm: &DesignMatrix, s: &Standardized, b: &[f64]) -> Vec<f64> {
    let slopes: Vec<f64> = b.iter().zip(&s.st.scales).map(|(v, sc)| v / sc).collect();
    let mut beta = Vec::with_capacity(dm.n_cols());
    if dm.has_intercept {
        let shift: f64 = slopes.iter().zip(&s.st.means).map(|(b, m)| b * m).sum();
        beta.push(s.y_mean - shift);
    }
    beta.extend(slopes);
    beta
}

/// Ridge regression minimizing `(1/2n)‖y − Zb‖² + (λ/2)‖b‖²` over the
/// standardized predictors; the intercept is not penalized. On a design
/// with `ZᵀZ = nI` this gives `b_ols / (1 + λ)`.
pub fn fit_ridge(dm: &DesignMatrix, lambda: f64) -> Result<LinearFit> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("ridge λ must be ≥ 0, got {lambda}")));
    }
    let n = dm.n_rows();
    let nf = n as f64;
    let s = standardize(dm);
    let q = s.cols.len();
    let mut a = s.z.tr_mul(&s.z);
    for j in 0..q {
        a[(j, j)] += nf * lambda;
    }
    let chol = a.cholesky().ok_or_else(|| Error::RankDeficient {
        column: "ridge system is singular; use λ > 0".into(),
    })?;
    // b_z = A⁻¹Zᵀy; the operator A⁻¹Zᵀ also yields the smoother and vcov
    let az = chol.solve(&s.z.transpose());
    let bz = &az * &s.y;

    let mut op = DMatrix::zeros(dm.n_cols(), n);
    let offset = usize::from(dm.has_intercept);
    for k in 0..q {
        let row = az.row(k) / s.st.scales[k];
        op.set_row(offset + k, &row);
    }
    if dm.has_intercept {
        let mut row = DMatrix::from_element(1, n, 1.0 / nf);
        for k in 0..q {
            row -= op.row(offset + k) * s.st.means[k];
        }
        op.set_row(0, &row.row(0));
    }

    let hat_diag: Vec<f64> = (0..n)
        .map(|i| {
            let base = if dm.has_intercept { 1.0 / nf } else { 0.0 };
            base + s.z.row(i).iter().zip(az.column(i).iter()).map(|(a, b)| a * b).sum::<f64>()
        })
        .collect();
    let beta = destandardize(dm, &s, bz.as_slice());
    let vcov_unscaled = &op * op.transpose();
    let mut fit = LinearFit::assemble(dm, beta, vcov_unscaled, hat_diag);
    fit.lambda = Some(lambda);
    fit.beta_standardized = Some(bz.as_slice().to_vec());
    Ok(fit)
}

#[derive(Debug, Clone)]
pub struct RidgeLearner {
    pub lambda: f64,
}

impl Learner for RidgeLearner {
    fn label(&self) -> String {
        format!("ridge(λ={})", self.lambda)
    }

    fn fit(&self, dm: &DesignMatrix) -> Result<Box<dyn Predictor>> {
        Ok(Box::new(fit_ridge(dm, self.lambda)?))
    }
}
