use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataframe::DesignMatrix;
use crate::error::{Error, Result};
use crate::eval::loss::sigmoid;
use crate::model::{Learner, Predictor};
use crate::trees::impurity::Impurity;
use crate::trees::tree::{grow_tree, Prepared, Tree, TreeConfig};

/// Loss minimised by the boosting iterations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoostLoss {
    /// Squared error on the raw response.
    Squared,
    /// Binomial deviance on the log-odds scale for a 0/1 response.
    Logistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostConfig {
    pub loss: BoostLoss,
    pub n_trees: usize,
    /// Maximum depth of each tree (the interaction depth).
    pub depth: usize,
    /// Learning rate ν in `F_m = F_{m-1} + ν f_m`.
    pub shrinkage: f64,
    pub min_leaf: usize,
    /// Fraction of rows drawn without replacement per iteration; 1 = all rows.
    #[serde(default = "one")]
    pub subsample: f64,
}

fn one() -> f64 {
    1.0
}

impl BoostConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 || self.depth == 0 || self.min_leaf == 0 {
            return Err(Error::InvalidArgument("boosting needs n_trees, depth and min_leaf ≥ 1".into()));
        }
        if !(self.shrinkage > 0.0 && self.shrinkage <= 1.0) {
            return Err(Error::InvalidArgument(format!("shrinkage {} not in (0, 1]", self.shrinkage)));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(Error::InvalidArgument(format!("subsample {} not in (0, 1]", self.subsample)));
        }
        Ok(())
    }
}

/// Gradient-boosted trees: `F(x) = init + ν Σ_m f_m(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedModel {
    pub column_names: Vec<String>,
    pub loss: BoostLoss,
    pub init: f64,
    pub shrinkage: f64,
    pub trees: Vec<Tree>,
    /// Training risk after 0, 1, …, M trees (mean squared error or mean deviance).
    pub staged_risk: Vec<f64>,
    /// Final training scores `F(x_i)`.
    pub train_scores: Vec<f64>,
    pub seed: u64,
}

fn training_risk(loss: BoostLoss, y: &[f64], f: &[f64]) -> f64 {
    let n = y.len() as f64;
    match loss {
        BoostLoss::Squared => y.iter().zip(f).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n,
        BoostLoss::Logistic => {
            // −2 log-likelihood per observation
            y.iter()
                .zip(f)
                .map(|(&yi, &fi)| 2.0 * (crate::eval::loss::softplus(fi) - yi * fi))
                .sum::<f64>()
                / n
        }
    }
}

pub fn fit_boosting(dm: &DesignMatrix, cfg: &BoostConfig, seed: u64) -> Result<BoostedModel> {
    cfg.validate()?;
    let y = dm.y.as_slice();
    let n = y.len();
    if n == 0 {
        return Err(Error::Empty("boosting data".into()));
    }
    let init = match cfg.loss {
        BoostLoss::Squared => y.iter().sum::<f64>() / n as f64,
        BoostLoss::Logistic => {
            if !dm.is_binary() {
                return Err(Error::InvalidArgument("logistic boosting needs a 0/1 response".into()));
            }
            let m = y.iter().sum::<f64>() / n as f64;
            if m == 0.0 || m == 1.0 {
                return Err(Error::SingleClass);
            }
            (m / (1.0 - m)).ln()
        }
    };
    let prep = Prepared::new(&dm.x);
    let candidates = dm.predictor_columns();
    let tree_cfg = TreeConfig {
        impurity: Impurity::Variance,
        min_leaf: cfg.min_leaf,
        min_split: 2 * cfg.min_leaf,
        max_depth: Some(cfg.depth),
        mtry: None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m_rows = ((cfg.subsample * n as f64).round() as usize).clamp(1, n);
    let mut f = vec![init; n];
    let mut staged_risk = vec![training_risk(cfg.loss, y, &f)];
    let mut trees = Vec::with_capacity(cfg.n_trees);
    let mut resid = vec![0.0; n];
    let mut hess = vec![1.0; n];
    for _ in 0..cfg.n_trees {
        for i in 0..n {
            match cfg.loss {
                BoostLoss::Squared => resid[i] = y[i] - f[i],
                BoostLoss::Logistic => {
                    let p = sigmoid(f[i]);
                    resid[i] = y[i] - p;
                    hess[i] = p * (1.0 - p);
                }
            }
        }
        let rows: Vec<usize> = if m_rows < n {
            let mut r = sample(&mut rng, n, m_rows).into_vec();
            r.sort_unstable();
            r
        } else {
            (0..n).collect()
        };
        let loss = cfg.loss;
        let (r_ref, h_ref) = (&resid, &hess);
        let leaf = move |rows: &[usize]| -> f64 {
            let s: f64 = rows.iter().map(|&i| r_ref[i]).sum();
            match loss {
                BoostLoss::Squared => s / rows.len().max(1) as f64,
                BoostLoss::Logistic => {
                    let h: f64 = rows.iter().map(|&i| h_ref[i]).sum();
                    if h > 1e-12 {
                        s / h
                    } else {
                        0.0
                    }
                }
            }
        };
        let tree = grow_tree(&prep, &resid, rows, &candidates, &tree_cfg, &mut rng, &leaf);
        for (i, fi) in f.iter_mut().enumerate() {
            *fi += cfg.shrinkage * tree.predict_index(&dm.x, i);
        }
        staged_risk.push(training_risk(cfg.loss, y, &f));
        trees.push(tree);
    }
    Ok(BoostedModel {
        column_names: dm.column_names.clone(),
        loss: cfg.loss,
        init,
        shrinkage: cfg.shrinkage,
        trees,
        staged_risk,
        train_scores: f,
        seed,
    })
}

impl BoostedModel {
    /// Scores `F(x)` on the additive scale (log-odds for logistic loss).
    pub fn decision_function(&self, x: &DMatrix<f64>) -> Vec<f64> {
        (0..x.nrows())
            .map(|i| {
                self.init + self.shrinkage * self.trees.iter().map(|t| t.predict_index(x, i)).sum::<f64>()
            })
            .collect()
    }

    /// Scores after each of the first `m` trees: `out[m][i]` for m = 0..=M.
    pub fn staged_scores(&self, x: &DMatrix<f64>) -> Vec<Vec<f64>> {
        let mut f = vec![self.init; x.nrows()];
        let mut out = Vec::with_capacity(self.trees.len() + 1);
        out.push(f.clone());
        for t in &self.trees {
            for (i, fi) in f.iter_mut().enumerate() {
                *fi += self.shrinkage * t.predict_index(x, i);
            }
            out.push(f.clone());
        }
        out
    }
}

impl Predictor for BoostedModel {
    /// Fitted mean for squared loss, probability of class 1 for logistic loss.
    fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let f = self.decision_function(x);
        match self.loss {
            BoostLoss::Squared => f,
            BoostLoss::Logistic => f.into_iter().map(sigmoid).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BoostingLearner {
    pub label: String,
    pub config: BoostConfig,
    pub seed: u64,
}

impl Learner for BoostingLearner {
    fn label(&self) -> String {
        self.label.clone()
    }

    fn fit(&self, dm: &DesignMatrix) -> Result<Box<dyn Predictor>> {
        Ok(Box::new(fit_boosting(dm, &self.config, self.seed)?))
    }

    fn is_classifier(&self) -> bool {
        self.config.loss == BoostLoss::Logistic
    }
}
