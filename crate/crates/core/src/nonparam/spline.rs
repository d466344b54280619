use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Equally spaced cubic B-spline basis on `[lo, hi]`; queries outside the
/// range are clamped to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BSplineBasis {
    pub lo: f64,
    pub hi: f64,
    pub segments: usize,
}

const DEGREE: usize = 3;

impl BSplineBasis {
    pub fn new(lo: f64, hi: f64, segments: usize) -> Result<Self> {
        if !(hi > lo) || segments == 0 {
            return Err(Error::InvalidArgument("spline basis needs hi > lo and segments ≥ 1".into()));
        }
        Ok(Self { lo, hi, segments })
    }

    pub fn size(&self) -> usize {
        self.segments + DEGREE
    }

    /// Values of every basis function at `x` (Cox–de Boor recursion).
    pub fn row(&self, x: f64) -> Vec<f64> {
        let x = x.clamp(self.lo, self.hi);
        let dx = (self.hi - self.lo) / self.segments as f64;
        let knot = |k: usize| self.lo + (k as f64 - DEGREE as f64) * dx;
        let nk = self.segments + 2 * DEGREE + 1;
        // degree-0 indicators; the right end belongs to the last interval
        let cell = (((x - self.lo) / dx).floor() as usize).min(self.segments - 1) + DEGREE;
        let mut b: Vec<f64> = (0..nk - 1).map(|k| f64::from(u8::from(k == cell))).collect();
        for d in 1..=DEGREE {
            let next: Vec<f64> = (0..nk - 1 - d)
                .map(|k| {
                    let left = (x - knot(k)) / (knot(k + d) - knot(k)) * b[k];
                    let right = (knot(k + d + 1) - x) / (knot(k + d + 1) - knot(k + 1)) * b[k + 1];
                    left + right
                })
                .collect();
            b = next;
        }
        b
    }

    pub fn matrix(&self, xs: &[f64]) -> DMatrix<f64> {
        let m = self.size();
        let mut out = DMatrix::zeros(xs.len(), m);
        for (i, &x) in xs.iter().enumerate() {
            for (j, v) in self.row(x).into_iter().enumerate() {
                out[(i, j)] = v;
            }
        }
        out
    }
}

/// Second-order difference penalty `DᵀD`.
fn difference_penalty(m: usize) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(m - 2, m);
    for k in 0..m - 2 {
        d[(k, k)] = 1.0;
        d[(k, k + 1)] = -2.0;
        d[(k, k + 2)] = 1.0;
    }
    d.transpose() * d
}

/// Penalized regression spline (P-spline) with a fixed penalty, viewed as a
/// linear smoother on its training inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PSpline {
    pub basis: BSplineBasis,
    pub lambda: f64,
    /// Effective degrees of freedom, `trace(S)`.
    pub df: f64,
    /// Basis matrix at the training inputs.
    #[serde(skip)]
    b: DMatrix<f64>,
    /// `(BᵀB + λP)⁻¹Bᵀ`, mapping data to coefficients.
    #[serde(skip)]
    op: DMatrix<f64>,
}

impl PSpline {
    /// Chooses the penalty so that `trace(S)` equals `df` (counting the
    /// constant and linear parts, so `df > 2`). The target is capped just
    /// below the number of distinct inputs.
    pub fn with_df(xs: &[f64], df: f64, segments: usize) -> Result<Self> {
        let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let basis = BSplineBasis::new(lo, hi, segments)?;
        let b = basis.matrix(xs);
        let btb = b.tr_mul(&b);
        let pen = difference_penalty(basis.size());
        let mut distinct = xs.to_vec();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        let target = df.min(distinct.len() as f64 - 0.01).min(basis.size() as f64 - 0.01);
        if target <= 2.0 {
            return Err(Error::InvalidArgument(format!(
                "spline needs df > 2 and more than 2 distinct inputs (target {target})"
            )));
        }
        let trace = |log_lambda: f64| -> Result<f64> {
            let a = &btb + &pen * log_lambda.exp();
            let chol = a.cholesky().ok_or_else(|| Error::InvalidArgument("singular spline system".into()))?;
            Ok(chol.solve(&btb).trace())
        };
        // trace decreases from rank(B) towards 2 as λ grows
        let (mut lo_l, mut hi_l) = (-30.0f64, 30.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo_l + hi_l);
            if trace(mid)? > target {
                lo_l = mid;
            } else {
                hi_l = mid;
            }
            if hi_l - lo_l < 1e-10 {
                break;
            }
        }
        let lambda = (0.5 * (lo_l + hi_l)).exp();
        Self::with_lambda_on(basis, b, btb, pen, lambda)
    }

    fn with_lambda_on(
        basis: BSplineBasis,
        b: DMatrix<f64>,
        btb: DMatrix<f64>,
        pen: DMatrix<f64>,
        lambda: f64,
    ) -> Result<Self> {
        let a = btb + pen * lambda;
        let chol = a.cholesky().ok_or_else(|| Error::InvalidArgument("singular spline system".into()))?;
        let op = chol.solve(&b.transpose());
        let df = (0..b.nrows()).map(|i| b.row(i).dot(&op.column(i).transpose())).sum();
        Ok(Self { basis, lambda, df, b, op })
    }

    /// Spline coefficients for a response at the training inputs.
    pub fn coefficients(&self, y: &[f64]) -> Vec<f64> {
        (&self.op * DVector::from_column_slice(y)).as_slice().to_vec()
    }

    /// Smoothed values at the training inputs.
    pub fn smooth(&self, y: &[f64]) -> Vec<f64> {
        let c = DVector::from_vec(self.coefficients(y));
        (&self.b * c).as_slice().to_vec()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.b.nrows()).map(|i| self.b.row(i).dot(&self.op.column(i).transpose())).collect()
    }

    pub fn evaluate(&self, coef: &[f64], x: f64) -> f64 {
        self.basis.row(x).iter().zip(coef).map(|(a, b)| a * b).sum()
    }
}
