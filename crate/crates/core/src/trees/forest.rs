use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataframe::folds::bootstrap_with;
use crate::dataframe::DesignMatrix;
use crate::error::{Error, Result};
use crate::model::{Learner, Predictor};
use crate::nonparam::Smoother;
use crate::trees::tree::{grow_tree, mean_of, Prepared, Tree, TreeConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Tree settings; `tree.mtry = None` grows bagged trees on all columns.
    pub tree: TreeConfig,
    /// Compute both importance tables (costs one extra pass per column).
    pub importance: bool,
}

/// Per-column importance measures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceRow {
    pub column: usize,
    pub variable: String,
    /// `(1/T) Σ_t Σ_{j splits on k} p_t(j)·ΔI(j)`, with `p_t(j)` the share of
    /// the tree's sample reaching node `j` and `ΔI(j)` the drop in mean impurity.
    pub impurity: f64,
    /// Out-of-bag risk increase after permuting the column, relative to the
    /// out-of-bag risk of the trees.
    pub permutation: f64,
    /// Monte Carlo standard error of `permutation` across trees.
    pub permutation_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub column_names: Vec<String>,
    pub trees: Vec<Tree>,
    /// Seed and stream that generated each tree.
    pub seed: u64,
    pub mtry: usize,
    pub classification: bool,
    /// Out-of-bag squared error (regression) or misclassification rate.
    pub oob_error: f64,
    /// Out-of-bag prediction per row; NaN for rows in every bag.
    pub oob_predictions: Vec<f64>,
    pub importance: Vec<ImportanceRow>,
}

struct Grown {
    tree: Tree,
    oob: Vec<usize>,
    impurity_drop: Vec<f64>,
    perm_increase: Vec<f64>,
    base_risk: f64,
}

fn risk(classification: bool, y: f64, pred: f64) -> f64 {
    if classification {
        f64::from(u8::from((pred > 0.5) != (y > 0.5)))
    } else {
        (y - pred).powi(2)
    }
}

/// Bagging or random forest: each tree grows on its own bootstrap sample,
/// drawing `mtry` candidate columns per split. Tree `t` uses stream `t` of
/// the master seed, so results do not depend on thread scheduling.
pub fn fit_forest(dm: &DesignMatrix, cfg: &ForestConfig, seed: u64) -> Result<Forest> {
    cfg.tree.validate()?;
    if cfg.n_trees == 0 {
        return Err(Error::InvalidArgument("a forest needs at least one tree".into()));
    }
    let classification = cfg.tree.impurity.is_classification();
    if classification && !dm.is_binary() {
        return Err(Error::InvalidArgument("classification forests need a 0/1 response".into()));
    }
    let candidates = dm.predictor_columns();
    let p = candidates.len();
    let mtry = cfg.tree.mtry.unwrap_or(p);
    if mtry > p {
        return Err(Error::InvalidArgument(format!("mtry = {mtry} exceeds the {p} predictors")));
    }
    let n = dm.n_rows();
    let prep = Prepared::new(&dm.x);
    let y = dm.y.as_slice();
    let grown: Vec<Grown> = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            let sample = bootstrap_with(n, &mut rng, seed);
            let tree = grow_tree(&prep, y, sample.in_bag.clone(), &candidates, &cfg.tree, &mut rng, &mean_of(y));
            grown_parts(dm, tree, sample.out_of_bag, &candidates, cfg.importance, classification, &mut rng)
        })
        .collect();
    Ok(assemble(dm, grown, seed, mtry, classification, &candidates))
}

fn grown_parts(
    dm: &DesignMatrix,
    tree: Tree,
    oob: Vec<usize>,
    candidates: &[usize],
    importance: bool,
    classification: bool,
    rng: &mut ChaCha8Rng,
) -> Grown {
    let p = dm.n_cols();
    let mut impurity_drop = vec![0.0; p];
    let root_n = tree.nodes[0].n as f64;
    for node in &tree.nodes {
        // node impurities are totals, so gain / n_root is p_t(j)·ΔI(j)
        if let Some(s) = node.split {
            impurity_drop[s.column] += s.gain / root_n;
        }
    }
    let y = dm.y.as_slice();
    let base_risk = if oob.is_empty() {
        0.0
    } else {
        oob.iter().map(|&i| risk(classification, y[i], tree.predict_index(&dm.x, i))).sum::<f64>()
            / oob.len() as f64
    };
    let mut perm_increase = vec![0.0; p];
    if importance && !oob.is_empty() {
        let mut xo = dm.x.select_rows(&oob);
        for &c in candidates {
            let original: Vec<f64> = xo.column(c).iter().copied().collect();
            let mut shuffled = original.clone();
            shuffled.shuffle(rng);
            for (k, v) in shuffled.iter().enumerate() {
                xo[(k, c)] = *v;
            }
            let r = oob
                .iter()
                .enumerate()
                .map(|(k, &i)| risk(classification, y[i], tree.predict_index(&xo, k)))
                .sum::<f64>()
                / oob.len() as f64;
            perm_increase[c] = r - base_risk;
            for (k, v) in original.iter().enumerate() {
                xo[(k, c)] = *v;
            }
        }
    }
    Grown { tree, oob, impurity_drop, perm_increase, base_risk }
}

fn assemble(
    dm: &DesignMatrix,
    grown: Vec<Grown>,
    seed: u64,
    mtry: usize,
    classification: bool,
    candidates: &[usize],
) -> Forest {
    let n = dm.n_rows();
    let t = grown.len() as f64;
    let mut sum = vec![0.0; n];
    let mut count = vec![0usize; n];
    for g in &grown {
        for &i in &g.oob {
            sum[i] += g.tree.predict_index(&dm.x, i);
            count[i] += 1;
        }
    }
    let oob_predictions: Vec<f64> =
        (0..n).map(|i| if count[i] > 0 { sum[i] / count[i] as f64 } else { f64::NAN }).collect();
    let scored: Vec<usize> = (0..n).filter(|&i| count[i] > 0).collect();
    let oob_error = if scored.is_empty() {
        f64::NAN
    } else {
        scored.iter().map(|&i| risk(classification, dm.y[i], oob_predictions[i])).sum::<f64>()
            / scored.len() as f64
    };
    let mean_base = grown.iter().map(|g| g.base_risk).sum::<f64>() / t;
    let scale = if mean_base > 0.0 { mean_base } else { 1.0 };
    let importance = candidates
        .iter()
        .map(|&c| {
            let incs: Vec<f64> = grown.iter().map(|g| g.perm_increase[c]).collect();
            let m = incs.iter().sum::<f64>() / t;
            let var = if grown.len() > 1 {
                incs.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (t - 1.0)
            } else {
                0.0
            };
            ImportanceRow {
                column: c,
                variable: dm.column_names[c].clone(),
                impurity: grown.iter().map(|g| g.impurity_drop[c]).sum::<f64>() / t,
                permutation: m / scale,
                permutation_se: (var / t).sqrt() / scale,
            }
        })
        .collect();
    Forest {
        column_names: dm.column_names.clone(),
        trees: grown.into_iter().map(|g| g.tree).collect(),
        seed,
        mtry,
        classification,
        oob_error,
        oob_predictions,
        importance,
    }
}

impl Forest {
    /// Importance rows sorted by decreasing impurity importance.
    pub fn ranked_by_impurity(&self) -> Vec<ImportanceRow> {
        let mut rows = self.importance.clone();
        rows.sort_by(|a, b| b.impurity.total_cmp(&a.impurity).then(a.column.cmp(&b.column)));
        rows
    }

    /// Importance rows sorted by decreasing permutation importance.
    pub fn ranked_by_permutation(&self) -> Vec<ImportanceRow> {
        let mut rows = self.importance.clone();
        rows.sort_by(|a, b| b.permutation.total_cmp(&a.permutation).then(a.column.cmp(&b.column)));
        rows
    }

    /// Each tree's prediction for every row of `x`, tree-major.
    pub fn member_predictions(&self, x: &DMatrix<f64>) -> Vec<Vec<f64>> {
        self.trees.iter().map(|t| (0..x.nrows()).map(|i| t.predict_index(x, i)).collect()).collect()
    }
}

impl Predictor for Forest {
    /// Mean of the member trees (mean class probability for classification).
    fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let t = self.trees.len() as f64;
        (0..x.nrows())
            .map(|i| self.trees.iter().map(|tr| tr.predict_index(x, i)).sum::<f64>() / t)
            .collect()
    }
}

impl Smoother for Forest {
    fn smoother_diagonal(&self) -> Result<Vec<f64>> {
        Err(Error::NotLinearSmoother("forest"))
    }
}

#[derive(Debug, Clone)]
pub struct ForestLearner {
    pub label: String,
    pub config: ForestConfig,
    pub seed: u64,
}

impl Learner for ForestLearner {
    fn label(&self) -> String {
        self.label.clone()
    }

    fn fit(&self, dm: &DesignMatrix) -> Result<Box<dyn Predictor>> {
        Ok(Box::new(fit_forest(dm, &self.config, self.seed)?))
    }

    fn is_classifier(&self) -> bool {
        self.config.tree.impurity.is_classification()
    }
}
