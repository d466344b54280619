use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataframe::DesignMatrix;
use crate::error::{Error, Result};
use crate::model::{Learner, Predictor};
use crate::trees::impurity::Impurity;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub impurity: Impurity,
    /// Smallest allowed leaf.
    pub min_leaf: usize,
    /// Smallest node that may be split.
    pub min_split: usize,
    pub max_depth: Option<usize>,
    /// Candidate columns drawn at each split; all columns when `None`.
    pub mtry: Option<usize>,
}

impl TreeConfig {
    pub fn new(impurity: Impurity) -> Self {
        Self { impurity, min_leaf: 1, min_split: 2, max_depth: None, mtry: None }
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_leaf == 0 {
            return Err(Error::InvalidArgument("min_leaf must be at least 1".into()));
        }
        if self.mtry == Some(0) {
            return Err(Error::InvalidArgument("mtry must be at least 1".into()));
        }
        Ok(())
    }
}

/// Inputs recoded as indices into each column's sorted distinct values.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub levels: Vec<Vec<f64>>,
    pub bins: Vec<Vec<u32>>,
}

impl Prepared {
    pub fn new(x: &DMatrix<f64>) -> Self {
        let mut levels = Vec::with_capacity(x.ncols());
        let mut bins = Vec::with_capacity(x.ncols());
        for col in x.column_iter() {
            let mut lv: Vec<f64> = col.iter().copied().collect();
            lv.sort_by(f64::total_cmp);
            lv.dedup();
            let b = col
                .iter()
                .map(|v| lv.binary_search_by(|p| p.total_cmp(v)).expect("value present") as u32)
                .collect();
            levels.push(lv);
            bins.push(b);
        }
        Self { levels, bins }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub column: usize,
    /// Rows with `x < threshold` go left.
    pub threshold: f64,
    pub gain: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Stats {
    n: f64,
    sum: f64,
    sumsq: f64,
}

impl Stats {
    const ZERO: Stats = Stats { n: 0.0, sum: 0.0, sumsq: 0.0 };

    fn add(&mut self, v: f64) {
        self.n += 1.0;
        self.sum += v;
        self.sumsq += v * v;
    }

    fn merge(&mut self, o: &Stats) {
        self.n += o.n;
        self.sum += o.sum;
        self.sumsq += o.sumsq;
    }

    fn minus(&self, o: &Stats) -> Stats {
        Stats { n: self.n - o.n, sum: self.sum - o.sum, sumsq: self.sumsq - o.sumsq }
    }

    fn impurity(&self, kind: Impurity) -> f64 {
        kind.from_stats(self.n, self.sum, self.sumsq)
    }
}

/// Response as seen by the criterion: centred at the node mean for the
/// variance criterion, raw 0/1 otherwise.
fn node_values(y: &[f64], rows: &[usize], kind: Impurity) -> Vec<f64> {
    let shift = if kind == Impurity::Variance {
        rows.iter().map(|&i| y[i]).sum::<f64>() / rows.len() as f64
    } else {
        0.0
    };
    rows.iter().map(|&i| y[i] - shift).collect()
}

/// Per-distinct-value statistics of one column over the node rows, in
/// increasing value order.
fn grouped(prep: &Prepared, column: usize, rows: &[usize], vals: &[f64]) -> Vec<(u32, Stats)> {
    let bins = &prep.bins[column];
    let nlev = prep.levels[column].len();
    if rows.len() * 8 < nlev {
        let mut order: Vec<usize> = (0..rows.len()).collect();
        order.sort_by_key(|&k| bins[rows[k]]);
        let mut out: Vec<(u32, Stats)> = Vec::new();
        for k in order {
            let b = bins[rows[k]];
            match out.last_mut() {
                Some((lb, st)) if *lb == b => st.add(vals[k]),
                _ => {
                    let mut st = Stats::ZERO;
                    st.add(vals[k]);
                    out.push((b, st));
                }
            }
        }
        out
    } else {
        let mut hist = vec![Stats::ZERO; nlev];
        for (k, &i) in rows.iter().enumerate() {
            hist[bins[i] as usize].add(vals[k]);
        }
        hist.into_iter()
            .enumerate()
            .filter(|(_, s)| s.n > 0.0)
            .map(|(b, s)| (b as u32, s))
            .collect()
    }
}

/// Best split of `rows` over `candidates` (column indices). Thresholds sit
/// midway between consecutive distinct values present in the node. Gains
/// within a relative 1e-10 of the best count as ties, resolved towards the
/// lowest column and then the lowest threshold. Returns `None` when no
/// admissible split has positive gain.
pub fn best_split(
    prep: &Prepared,
    y: &[f64],
    rows: &[usize],
    candidates: &[usize],
    kind: Impurity,
    min_leaf: usize,
) -> Option<Split> {
    let vals = node_values(y, rows, kind);
    let mut parent = Stats::ZERO;
    for &v in &vals {
        parent.add(v);
    }
    let parent_imp = parent.impurity(kind);
    let min_leaf = min_leaf as f64;
    let mut cands: Vec<Split> = Vec::new();
    let mut sorted = candidates.to_vec();
    sorted.sort_unstable();
    for &c in &sorted {
        let groups = grouped(prep, c, rows, &vals);
        let mut left = Stats::ZERO;
        for w in groups.windows(2) {
            left.merge(&w[0].1);
            let right = parent.minus(&left);
            if left.n < min_leaf || right.n < min_leaf {
                continue;
            }
            let gain = parent_imp - left.impurity(kind) - right.impurity(kind);
            let lv = &prep.levels[c];
            let threshold = 0.5 * (lv[w[0].0 as usize] + lv[w[1].0 as usize]);
            cands.push(Split { column: c, threshold, gain });
        }
    }
    let best = cands.iter().map(|s| s.gain).fold(f64::NEG_INFINITY, f64::max);
    let eps = 1e-10 * parent_imp.abs().max(1e-300);
    if !(best > eps) {
        return None;
    }
    cands.into_iter().find(|s| s.gain >= best - eps)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub n: usize,
    pub impurity: f64,
    pub depth: usize,
    /// Mean response (class frequency) or, in boosting, the leaf step.
    pub value: f64,
    pub split: Option<Split>,
    /// Child indices `(left, right)` for internal nodes.
    pub children: Option<(usize, usize)>,
}

/// Binary tree stored as a node arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_of(&self, x: &DMatrix<f64>, i: usize) -> usize {
        let mut k = 0;
        while let (Some(s), Some((l, r))) = (self.nodes[k].split, self.nodes[k].children) {
            k = if x[(i, s.column)] < s.threshold { l } else { r };
        }
        k
    }

    pub fn predict_index(&self, x: &DMatrix<f64>, i: usize) -> f64 {
        self.nodes[self.leaf_of(x, i)].value
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.split.is_none()).count()
    }

    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    /// Indented rule listing, one line per node.
    pub fn dump(&self, names: &[String]) -> String {
        let mut out = String::new();
        self.dump_node(0, names, "root", &mut out);
        out
    }

    fn dump_node(&self, k: usize, names: &[String], rule: &str, out: &mut String) {
        let node = &self.nodes[k];
        let indent = "  ".repeat(node.depth);
        let _ = writeln!(out, "{indent}{rule}: n={} value={:.4}", node.n, node.value);
        if let (Some(s), Some((l, r))) = (node.split, node.children) {
            let name = names.get(s.column).map_or("?", String::as_str);
            self.dump_node(l, names, &format!("{name} < {}", s.threshold), out);
            self.dump_node(r, names, &format!("{name} >= {}", s.threshold), out);
        }
    }
}

/// Grows a tree on `rows` by recursive best splits. `leaf_value` computes
/// the value stored at every node from its rows.
pub fn grow_tree<R: Rng>(
    prep: &Prepared,
    y: &[f64],
    rows: Vec<usize>,
    candidates: &[usize],
    cfg: &TreeConfig,
    rng: &mut R,
    leaf_value: &dyn Fn(&[usize]) -> f64,
) -> Tree {
    let mut nodes: Vec<Node> = Vec::new();
    let mut stack: Vec<(usize, Vec<usize>)> = Vec::new();
    let make = |rows: &[usize], depth: usize| {
        let vals = node_values(y, rows, cfg.impurity);
        let mut st = Stats::ZERO;
        for v in vals {
            st.add(v);
        }
        Node {
            n: rows.len(),
            impurity: st.impurity(cfg.impurity),
            depth,
            value: leaf_value(rows),
            split: None,
            children: None,
        }
    };
    nodes.push(make(&rows, 0));
    stack.push((0, rows));
    while let Some((k, rows)) = stack.pop() {
        let node = &nodes[k];
        let depth_ok = cfg.max_depth.is_none_or(|d| node.depth < d);
        if !depth_ok
            || rows.len() < cfg.min_split.max(2 * cfg.min_leaf)
            || node.impurity <= 0.0
        {
            continue;
        }
        let drawn: Vec<usize> = match cfg.mtry {
            Some(m) if m < candidates.len() => {
                sample(rng, candidates.len(), m).into_iter().map(|j| candidates[j]).collect()
            }
            _ => candidates.to_vec(),
        };
        let Some(split) = best_split(prep, y, &rows, &drawn, cfg.impurity, cfg.min_leaf) else {
            continue;
        };
        let lv = &prep.levels[split.column];
        let bins = &prep.bins[split.column];
        let (left, right): (Vec<usize>, Vec<usize>) =
            rows.iter().partition(|&&i| lv[bins[i] as usize] < split.threshold);
        let depth = nodes[k].depth + 1;
        let l = nodes.len();
        nodes.push(make(&left, depth));
        nodes.push(make(&right, depth));
        nodes[k].split = Some(split);
        nodes[k].children = Some((l, l + 1));
        // right first so the left subtree is expanded first
        stack.push((l + 1, right));
        stack.push((l, left));
    }
    Tree { nodes }
}

/// Mean of the response over `rows`.
pub fn mean_of(y: &[f64]) -> impl Fn(&[usize]) -> f64 + '_ {
    move |rows: &[usize]| rows.iter().map(|&i| y[i]).sum::<f64>() / rows.len().max(1) as f64
}

/// Single CART tree with its column names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedTree {
    pub tree: Tree,
    pub column_names: Vec<String>,
    pub config: TreeConfig,
}

pub fn fit_tree(dm: &DesignMatrix, cfg: &TreeConfig, seed: u64) -> Result<FittedTree> {
    cfg.validate()?;
    if cfg.impurity.is_classification() && !dm.is_binary() {
        return Err(Error::InvalidArgument("classification trees need a 0/1 response".into()));
    }
    let prep = Prepared::new(&dm.x);
    let y = dm.y.as_slice();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tree = grow_tree(&prep, y, (0..dm.n_rows()).collect(), &dm.predictor_columns(), cfg, &mut rng, &mean_of(y));
    Ok(FittedTree { tree, column_names: dm.column_names.clone(), config: cfg.clone() })
}

impl FittedTree {
    pub fn dump(&self) -> String {
        self.tree.dump(&self.column_names)
    }
}

impl Predictor for FittedTree {
    fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        (0..x.nrows()).map(|i| self.tree.predict_index(x, i)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct TreeLearner {
    pub config: TreeConfig,
    pub seed: u64,
}

impl Learner for TreeLearner {
    fn label(&self) -> String {
        "tree".into()
    }

    fn fit(&self, dm: &DesignMatrix) -> Result<Box<dyn Predictor>> {
        Ok(Box::new(fit_tree(dm, &self.config, self.seed)?))
    }

    fn is_classifier(&self) -> bool {
        self.config.impurity.is_classification()
    }
}
