use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataframe::DesignMatrix;
use crate::error::{Error, Result};
use crate::linmod::ridge::{destandardize, standardize, Standardized};
use crate::model::{Learner, LinearPredictor, Predictor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoOptions {
    /// Explicit decreasing grid; generated from `λ_max` when absent.
    pub lambdas: Option<Vec<f64>>,
    pub n_lambda: usize,
    /// Smallest grid value as a fraction of `λ_max`.
    pub min_ratio: f64,
    /// Convergence threshold on the largest coefficient change in a sweep.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self { lambdas: None, n_lambda: 100, min_ratio: 1e-3, tol: 1e-7, max_sweeps: 100_000 }
    }
}

/// A variable's first appearance along the path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub column: usize,
    pub name: String,
    /// Penalty at which the coefficient first becomes non-zero.
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoPath {
    pub column_names: Vec<String>,
    pub has_intercept: bool,
    pub lambda_max: f64,
    /// Decreasing penalty grid.
    pub lambdas: Vec<f64>,
    /// Original-scale coefficients, one column per penalty (intercept first).
    pub betas: DMatrix<f64>,
    /// Coefficients on the standardized predictors, one column per penalty.
    pub betas_standardized: DMatrix<f64>,
    /// Design-column indices with non-zero coefficients at each penalty.
    pub active_sets: Vec<Vec<usize>>,
    pub n_iter: Vec<usize>,
    pub converged: Vec<bool>,
    /// Variables in order of first entry, ties broken by column index.
    pub entries: Vec<Entry>,
}

fn soft_threshold(t: f64, lambda: f64) -> f64 {
    t.signum() * (t.abs() - lambda).max(0.0)
}

struct Problem<'a> {
    z: &'a DMatrix<f64>,
    y: &'a DVector<f64>,
    colsq: Vec<f64>,
    n: f64,
    tol: f64,
    max_sweeps: usize,
}

impl<'a> Problem<'a> {
    fn new(s: &'a Standardized, tol: f64, max_sweeps: usize) -> Self {
        let n = s.z.nrows() as f64;
        let colsq = s.z.column_iter().map(|c| c.norm_squared() / n).collect();
        Self { z: &s.z, y: &s.y, colsq, n, tol, max_sweeps }
    }

    fn residual(&self, b: &[f64]) -> DVector<f64> {
        self.y - self.z * DVector::from_column_slice(b)
    }

    /// Cyclic coordinate descent from `b`; returns (sweeps, converged).
    fn solve(&self, b: &mut [f64], lambda: f64) -> (usize, bool) {
        let mut r = self.residual(b);
        for sweep in 1..=self.max_sweeps {
            let mut max_change: f64 = 0.0;
            for j in 0..b.len() {
                if self.colsq[j] < 1e-12 {
                    continue;
                }
                let col = self.z.column(j);
                let rho = col.dot(&r) / self.n + self.colsq[j] * b[j];
                let new = soft_threshold(rho, lambda) / self.colsq[j];
                let delta = new - b[j];
                if delta != 0.0 {
                    r.axpy(-delta, &col, 1.0);
                    b[j] = new;
                    max_change = max_change.max(delta.abs());
                }
            }
            if max_change < self.tol {
                return (sweep, true);
            }
        }
        (self.max_sweeps, false)
    }
}

/// Smallest penalty at which every slope is zero, `max_j |z_jᵀ(y − ȳ)|/n`.
pub fn lambda_max(dm: &DesignMatrix) -> f64 {
    let s = standardize(dm);
    s.z.tr_mul(&s.y).iter().fold(0.0f64, |m, v| m.max(v.abs())) / dm.n_rows() as f64
}

fn support(b: &[f64]) -> Vec<usize> {
    (0..b.len()).filter(|&j| b[j] != 0.0).collect()
}

/// Lasso path minimizing `(1/2n)‖y − Zb‖² + λ‖b‖₁` over the standardized
/// predictors by cyclic coordinate descent with warm starts. The intercept
/// is not penalized. Entry order along the path is resolved below grid
/// resolution by bisecting the penalty between grid points.
pub fn fit_lasso(dm: &DesignMatrix, opts: &LassoOptions) -> Result<LassoPath> {
    let s = standardize(dm);
    let q = s.cols.len();
    if q == 0 {
        return Err(Error::InvalidArgument("lasso needs at least one predictor".into()));
    }
    let prob = Problem::new(&s, opts.tol, opts.max_sweeps);
    let lambda_max = s.z.tr_mul(&s.y).iter().fold(0.0f64, |m, v| m.max(v.abs())) / prob.n;

    let lambdas = match &opts.lambdas {
        Some(grid) => {
            if grid.is_empty() || grid.iter().any(|l| !(*l >= 0.0)) {
                return Err(Error::InvalidArgument("λ grid must be non-empty and ≥ 0".into()));
            }
            let mut g = grid.clone();
            g.sort_by(|a, b| b.total_cmp(a));
            g
        }
        None => {
            if opts.n_lambda < 2 || !(opts.min_ratio > 0.0 && opts.min_ratio < 1.0) {
                return Err(Error::InvalidArgument("invalid automatic λ grid".into()));
            }
            let step = opts.min_ratio.ln() / (opts.n_lambda - 1) as f64;
            (0..opts.n_lambda).map(|k| lambda_max * (step * k as f64).exp()).collect()
        }
    };

    let nl = lambdas.len();
    let mut betas_std = DMatrix::zeros(q, nl);
    let mut betas = DMatrix::zeros(dm.n_cols(), nl);
    let mut active_sets = Vec::with_capacity(nl);
    let mut n_iter = Vec::with_capacity(nl);
    let mut converged = Vec::with_capacity(nl);
    let mut entry_lambda: Vec<Option<f64>> = vec![None; q];
    let mut b = vec![0.0; q];
    for (k, &lambda) in lambdas.iter().enumerate() {
        let previous = b.clone();
        let (it, ok) = prob.solve(&mut b, lambda);
        n_iter.push(it);
        converged.push(ok);
        let newcomers: Vec<usize> =
            (0..q).filter(|&j| b[j] != 0.0 && entry_lambda[j].is_none()).collect();
        if k > 0 {
            for &j in &newcomers {
                entry_lambda[j] = Some(bisect_entry(&prob, &previous, j, lambda, lambdas[k - 1]));
            }
        } else {
            for &j in &newcomers {
                entry_lambda[j] = Some(lambda);
            }
        }
        betas_std.set_column(k, &DVector::from_column_slice(&b));
        let orig = destandardize(dm, &s, &b);
        betas.set_column(k, &DVector::from_vec(orig));
        active_sets.push(support(&b).into_iter().map(|j| s.cols[j]).collect());
    }

    let mut entries: Vec<Entry> = entry_lambda
        .iter()
        .enumerate()
        .filter_map(|(j, l)| {
            l.map(|lambda| Entry {
                column: s.cols[j],
                name: dm.column_names[s.cols[j]].clone(),
                lambda,
            })
        })
        .collect();
    entries.sort_by(|a, b| b.lambda.total_cmp(&a.lambda).then(a.column.cmp(&b.column)));

    Ok(LassoPath {
        column_names: dm.column_names.clone(),
        has_intercept: dm.has_intercept,
        lambda_max,
        lambdas,
        betas,
        betas_standardized: betas_std,
        active_sets,
        n_iter,
        converged,
        entries,
    })
}

/// Largest penalty in `(lo, hi)` at which coordinate `j` is active, starting
/// each solve from the path solution at `hi`.
fn bisect_entry(prob: &Problem, warm: &[f64], j: usize, lo: f64, hi: f64) -> f64 {
    let (mut lo, mut hi) = (lo, hi);
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        let mut b = warm.to_vec();
        prob.solve(&mut b, mid);
        if b[j] != 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    lo
}

impl LassoPath {
    /// Largest violation of the lasso optimality conditions at grid point
    /// `k`, measured on the standardized design of `dm`.
    pub fn kkt_violation(&self, dm: &DesignMatrix, k: usize) -> f64 {
        let s = standardize(dm);
        let n = dm.n_rows() as f64;
        let b = self.betas_standardized.column(k);
        let r = &s.y - &s.z * b;
        let lambda = self.lambdas[k];
        (0..b.len())
            .map(|j| {
                let g = s.z.column(j).dot(&r) / n;
                if b[j] == 0.0 {
                    (g.abs() - lambda).max(0.0)
                } else {
                    (g - lambda * b[j].signum()).abs()
                }
            })
            .fold(0.0, f64::max)
    }

    pub fn coefficients(&self, k: usize) -> Vec<f64> {
        self.betas.column(k).iter().copied().collect()
    }
}

/// Lasso at a single penalty, expressed as a fraction of each training
/// set's `λ_max`.
#[derive(Debug, Clone)]
pub struct LassoLearner {
    pub lambda_ratio: f64,
}

impl Learner for LassoLearner {
    fn label(&self) -> String {
        format!("lasso(λ/λmax={})", self.lambda_ratio)
    }

    fn fit(&self, dm: &DesignMatrix) -> Result<Box<dyn Predictor>> {
        let lambda = lambda_max(dm) * self.lambda_ratio;
        let path = fit_lasso(dm, &LassoOptions { lambdas: Some(vec![lambda]), ..Default::default() })?;
        Ok(Box::new(LinearPredictor { beta: path.coefficients(0), inverse_link: None }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data() -> DesignMatrix {
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                let t = i as f64;
                vec![(t * 0.3).sin(), (t * 0.7).cos() * 2.0, ((i * 7) % 11) as f64, t / 10.0]
            })
            .collect();
        let y: Vec<f64> = rows
            .iter()
            .enumerate()
            .map(|(i, r)| 3.0 * r[0] - r[1] + 0.05 * r[2] + ((i * 13) % 7) as f64 * 0.05)
            .collect();
        DesignMatrix::from_rows(&rows, &y, true).unwrap()
    }

    #[test]
    fn null_model_at_lambda_max() {
        let dm = data();
        let path = fit_lasso(&dm, &LassoOptions::default()).unwrap();
        assert!(path.active_sets[0].is_empty());
        assert!(path.betas.column(0).iter().skip(1).all(|&b| b == 0.0));
        assert!((path.betas[(0, 0)] - dm.y.mean()).abs() < 1e-12);
        assert!(path.converged.iter().all(|&c| c));
    }

    #[test]
    fn kkt_along_path() {
        let dm = data();
        let path = fit_lasso(&dm, &LassoOptions::default()).unwrap();
        for k in 0..path.lambdas.len() {
            assert!(path.kkt_violation(&dm, k) < 1e-6, "grid point {k}");
        }
    }

    #[test]
    fn entries_follow_path() {
        let dm = data();
        let path = fit_lasso(&dm, &LassoOptions::default()).unwrap();
        assert_eq!(path.entries[0].name, "x1");
        for w in path.entries.windows(2) {
            assert!(w[0].lambda >= w[1].lambda);
        }
    }

    #[test]
    fn soft_threshold_values() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
        assert_eq!(soft_threshold(0.5, 1.0), 0.0);
    }
}
