//! Soft-margin support vector machines trained in the dual.
//!
//! The dual problem
//! `max Σα_i − ½ ΣΣ α_i α_j y_i y_j K(x_i, x_j)` subject to `0 ≤ α_i ≤ C`
//! and `Σ α_i y_i = 0` is solved by pairwise coordinate updates on the
//! maximal violating pair, which keeps the equality constraint exact.

use std::num::NonZeroUsize;
use std::sync::Arc;

use lru::LruCache;
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataframe::DesignMatrix;
use crate::error::{Error, Result};
use crate::model::{Learner, Predictor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Kernel {
    Linear,
    /// `K(u, v) = exp(−γ‖u − v‖²)`; `gamma = None` uses `1/(p·var(x))`.
    Rbf { gamma: Option<f64> },
}

impl Kernel {
    fn eval(&self, gamma: f64, u: &[f64], v: &[f64]) -> f64 {
        match self {
            Kernel::Linear => u.iter().zip(v).map(|(a, b)| a * b).sum(),
            Kernel::Rbf { .. } => {
                let d2: f64 = u.iter().zip(v).map(|(a, b)| (a - b).powi(2)).sum();
                (-gamma * d2).exp()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmOptions {
    pub c: f64,
    pub kernel: Kernel,
    /// Stop when the maximal KKT violation drops below this value.
    pub tol: f64,
    /// Seed for the order in which ties between violating pairs are broken.
    pub seed: u64,
    pub max_iter: usize,
    /// Memory budget of the kernel-row cache, in bytes.
    pub cache_bytes: usize,
}

impl SvmOptions {
    pub fn new(c: f64, kernel: Kernel) -> Self {
        Self { c, kernel, tol: 1e-3, seed: 0, max_iter: 10_000_000, cache_bytes: 256 << 20 }
    }
}

/// Fitted machine; only support rows (α_i > 0) are kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    /// Input columns of the design used as features.
    pub columns: Vec<usize>,
    pub column_names: Vec<String>,
    pub kernel: Kernel,
    /// Resolved RBF width (0 for the linear kernel).
    pub gamma: f64,
    pub c: f64,
    pub bias: f64,
    pub support_rows: Vec<usize>,
    pub support_vectors: Vec<Vec<f64>>,
    /// Dual coefficients α_i of the support rows.
    pub alpha: Vec<f64>,
    /// ±1 labels of the support rows.
    pub labels: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Final maximal KKT violation.
    pub kkt_gap: f64,
}

struct KernelRows<'a> {
    x: &'a [Vec<f64>],
    kernel: Kernel,
    gamma: f64,
    cache: LruCache<usize, Arc<Vec<f64>>>,
}

impl KernelRows<'_> {
    fn row(&mut self, i: usize) -> Arc<Vec<f64>> {
        if let Some(r) = self.cache.get(&i) {
            return Arc::clone(r);
        }
        let xi = &self.x[i];
        let r: Arc<Vec<f64>> = Arc::new(self.x.iter().map(|xj| self.kernel.eval(self.gamma, xi, xj)).collect());
        self.cache.put(i, Arc::clone(&r));
        r
    }
}

/// Default RBF width `1/(p·var(x))`, variance over all feature entries.
fn default_gamma(x: &[Vec<f64>]) -> f64 {
    let p = x.first().map_or(1, Vec::len).max(1);
    let vals: Vec<f64> = x.iter().flatten().copied().collect();
    let m = vals.iter().sum::<f64>() / vals.len().max(1) as f64;
    let var = vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / vals.len().max(1) as f64;
    if var > 0.0 {
        1.0 / (p as f64 * var)
    } else {
        1.0
    }
}

fn feature_rows(dm: &DesignMatrix, columns: &[usize]) -> Vec<Vec<f64>> {
    (0..dm.n_rows()).map(|i| columns.iter().map(|&c| dm.x[(i, c)]).collect()).collect()
}

/// Trains on the ±1 view of a 0/1 response, excluding any intercept column
/// (the bias is carried by the equality constraint).
pub fn fit_svm(dm: &DesignMatrix, opts: &SvmOptions) -> Result<SvmModel> {
    if !(opts.c > 0.0) || !opts.c.is_finite() {
        return Err(Error::InvalidArgument(format!("C must be positive, got {}", opts.c)));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument("tol must be positive".into()));
    }
    if !dm.is_binary() {
        return Err(Error::InvalidArgument("support vector machines need a 0/1 response".into()));
    }
    let y = dm.signed_y();
    if y.iter().all(|&v| v > 0.0) || y.iter().all(|&v| v < 0.0) {
        return Err(Error::SingleClass);
    }
    let columns = dm.predictor_columns();
    let x = feature_rows(dm, &columns);
    let gamma = match opts.kernel {
        Kernel::Linear => 0.0,
        Kernel::Rbf { gamma: Some(g) } if g > 0.0 => g,
        Kernel::Rbf { gamma: Some(g) } => {
            return Err(Error::InvalidArgument(format!("RBF gamma must be positive, got {g}")))
        }
        Kernel::Rbf { gamma: None } => default_gamma(&x),
    };
    let n = x.len();
    let c = opts.c;
    let rows_budget = (opts.cache_bytes / (8 * n).max(1)).max(2);
    let mut kr = KernelRows {
        x: &x,
        kernel: opts.kernel,
        gamma,
        cache: LruCache::new(NonZeroUsize::new(rows_budget).expect("budget ≥ 2")),
    };
    let diag: Vec<f64> = (0..n).map(|i| opts.kernel.eval(gamma, &x[i], &x[i])).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(opts.seed));

    let mut alpha = vec![0.0; n];
    // gradient of ½αᵀQα − Σα, Q_ij = y_i y_j K_ij
    let mut grad = vec![-1.0; n];
    let in_up = |a: f64, yi: f64| (yi > 0.0 && a < c) || (yi < 0.0 && a > 0.0);
    let in_low = |a: f64, yi: f64| (yi < 0.0 && a < c) || (yi > 0.0 && a > 0.0);
    let mut iterations = 0;
    let mut converged = false;
    let mut gap = f64::INFINITY;
    while iterations < opts.max_iter {
        let (mut i, mut big_m) = (usize::MAX, f64::NEG_INFINITY);
        let (mut j, mut small_m) = (usize::MAX, f64::INFINITY);
        for &t in &order {
            let v = -y[t] * grad[t];
            if in_up(alpha[t], y[t]) && v > big_m {
                big_m = v;
                i = t;
            }
            if in_low(alpha[t], y[t]) && v < small_m {
                small_m = v;
                j = t;
            }
        }
        gap = big_m - small_m;
        if i == usize::MAX || j == usize::MAX || gap < opts.tol {
            converged = true;
            break;
        }
        iterations += 1;
        let ki = kr.row(i);
        let kj = kr.row(j);
        // move α_i += y_i t, α_j −= y_j t
        let eta = (diag[i] + diag[j] - 2.0 * ki[j]).max(1e-12);
        let mut t = gap / eta;
        t = t.min(if y[i] > 0.0 { c - alpha[i] } else { alpha[i] });
        t = t.min(if y[j] > 0.0 { alpha[j] } else { c - alpha[j] });
        let di = y[i] * t;
        let dj = -y[j] * t;
        alpha[i] = (alpha[i] + di).clamp(0.0, c);
        alpha[j] = (alpha[j] + dj).clamp(0.0, c);
        for k in 0..n {
            grad[k] += y[k] * (y[i] * ki[k] * di + y[j] * kj[k] * dj);
        }
    }
    // snap to the bounds so the box and equality constraints hold exactly
    let snap = 1e-12 * c;
    for a in &mut alpha {
        if *a < snap {
            *a = 0.0;
        } else if *a > c - snap {
            *a = c;
        }
    }
    let free: Vec<usize> = (0..n).filter(|&t| alpha[t] > 0.0 && alpha[t] < c).collect();
    let bias = if free.is_empty() {
        let up = (0..n).filter(|&t| in_up(alpha[t], y[t])).map(|t| -y[t] * grad[t]).fold(f64::NEG_INFINITY, f64::max);
        let low = (0..n).filter(|&t| in_low(alpha[t], y[t])).map(|t| -y[t] * grad[t]).fold(f64::INFINITY, f64::min);
        match (up.is_finite(), low.is_finite()) {
            (true, true) => 0.5 * (up + low),
            (true, false) => up,
            (false, true) => low,
            (false, false) => 0.0,
        }
    } else {
        free.iter().map(|&t| -y[t] * grad[t]).sum::<f64>() / free.len() as f64
    };
    let support: Vec<usize> = (0..n).filter(|&t| alpha[t] > 0.0).collect();
    Ok(SvmModel {
        column_names: columns.iter().map(|&c| dm.column_names[c].clone()).collect(),
        columns,
        kernel: opts.kernel,
        gamma,
        c,
        bias,
        support_vectors: support.iter().map(|&t| x[t].clone()).collect(),
        alpha: support.iter().map(|&t| alpha[t]).collect(),
        labels: support.iter().map(|&t| y[t]).collect(),
        support_rows: support,
        iterations,
        converged,
        kkt_gap: gap,
    })
}

impl SvmModel {
    /// `f(x) = Σ α_i y_i K(x_i, x) + b` for one feature vector.
    pub fn decision_value(&self, features: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(self.alpha.iter().zip(&self.labels))
            .map(|(sv, (a, yl))| a * yl * self.kernel.eval(self.gamma, sv, features))
            .sum::<f64>()
            + self.bias
    }

    /// Decision values for the rows of a design-shaped matrix.
    pub fn decision_values(&self, x: &DMatrix<f64>) -> Vec<f64> {
        (0..x.nrows())
            .map(|i| {
                let f: Vec<f64> = self.columns.iter().map(|&c| x[(i, c)]).collect();
                self.decision_value(&f)
            })
            .collect()
    }

    /// Predicted ±1 labels; a zero decision value maps to −1.
    pub fn classify(&self, x: &DMatrix<f64>) -> Vec<f64> {
        self.decision_values(x).into_iter().map(|f| if f > 0.0 { 1.0 } else { -1.0 }).collect()
    }

    /// Primal weight vector `w = Σ α_i y_i x_i` (linear kernel only).
    pub fn primal_weights(&self) -> Option<Vec<f64>> {
        if self.kernel != Kernel::Linear {
            return None;
        }
        let p = self.columns.len();
        let mut w = vec![0.0; p];
        for (sv, (a, yl)) in self.support_vectors.iter().zip(self.alpha.iter().zip(&self.labels)) {
            for (wk, xk) in w.iter_mut().zip(sv) {
                *wk += a * yl * xk;
            }
        }
        Some(w)
    }

    /// Dual objective `Σα − ½ ΣΣ α_i α_j y_i y_j K_ij` at the solution.
    pub fn dual_objective(&self) -> f64 {
        let s = self.alpha.len();
        let mut quad = 0.0;
        for a in 0..s {
            for b in 0..s {
                quad += self.alpha[a]
                    * self.alpha[b]
                    * self.labels[a]
                    * self.labels[b]
                    * self.kernel.eval(self.gamma, &self.support_vectors[a], &self.support_vectors[b]);
            }
        }
        self.alpha.iter().sum::<f64>() - 0.5 * quad
    }

    /// Mean hinge loss `max(0, 1 − y f(x))` on a design with a 0/1 response.
    pub fn hinge_risk(&self, dm: &DesignMatrix) -> f64 {
        hinge_risk(&dm.signed_y(), &self.decision_values(&dm.x))
    }
}

/// Mean of `max(0, 1 − y_i f_i)` for ±1 labels.
pub fn hinge_risk(labels: &[f64], decision: &[f64]) -> f64 {
    labels.iter().zip(decision).map(|(y, f)| (1.0 - y * f).max(0.0)).sum::<f64>() / labels.len().max(1) as f64
}

impl Predictor for SvmModel {
    /// Signed decision values (scores, not probabilities).
    fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        self.decision_values(x)
    }
}

#[derive(Debug, Clone)]
pub struct SvmLearner {
    pub label: String,
    pub options: SvmOptions,
}

impl Learner for SvmLearner {
    fn label(&self) -> String {
        self.label.clone()
    }

    fn fit(&self, dm: &DesignMatrix) -> Result<Box<dyn Predictor>> {
        Ok(Box::new(fit_svm(dm, &self.options)?))
    }

    fn is_classifier(&self) -> bool {
        true
    }
}
