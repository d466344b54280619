//! Runs every model of an experiment on one shared fold plan.

use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use twocultures::dataframe::{
    encode, load_csv, make_folds, make_stratified_folds, Coding, Dataset, FoldPlan, Formula, Schema,
};
use twocultures::error::Result as CoreResult;
use twocultures::eval::{confusion_at, cross_validate, kappa, optimal_cutoff, roc, CvReport, Cutoff, Loss, RocCurve};
use twocultures::linmod::{Family, GlmLearner, LassoLearner, OlsLearner, RidgeLearner, Schedule};
use twocultures::mlp::{Activation, MlpLearner, MlpOptions, NetLoss};
use twocultures::model::{Learner, Predictor};
use twocultures::nonparam::{log_grid, AdditiveLearner, AdditiveOptions, Kernel, KernelLearner, KnnLearner, SmootherSpec};
use twocultures::svm::{self, SvmLearner, SvmOptions};
use twocultures::trees::{
    fit_forest, BoostConfig, BoostLoss, BoostingLearner, ForestConfig, ForestLearner, ImportanceRow, Impurity,
    TreeConfig, TreeLearner,
};
use twocultures::DesignMatrix;

use crate::config::{
    AdditiveParams, BoostingParams, ExperimentConfig, ForestParams, KernelParams, MlpParams, ModelConfig, ModelKind,
    SmootherKind, SvmKernelKind, SvmParams, Task, TreeParams,
};
use crate::CliError;

/// Command-line overrides and locations.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub folds: Option<usize>,
    pub out_dir: PathBuf,
    pub data_dir: PathBuf,
}

/// Validation plan shared by every model of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanStamp {
    pub folds: usize,
    pub seed: u64,
    pub stratified: bool,
    /// Hash of the fold assignment; identical for every model.
    pub fingerprint: String,
    pub n_rows: usize,
}

/// Sensitivity, specificity and agreement at one threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub threshold: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub accuracy: f64,
    /// `None` when the table is degenerate.
    pub kappa: Option<f64>,
}

/// Threshold analysis of the pooled out-of-fold scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSummary {
    pub auc: f64,
    pub cutoff: Cutoff,
    pub at_half: Rates,
    pub at_cutoff: Rates,
    pub roc: RocCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResult {
    pub label: String,
    pub kind: String,
    pub formula: String,
    /// Design columns, intercept included.
    pub n_columns: usize,
    pub cv: CvReport,
    pub classification: Option<ClassSummary>,
    /// Forest importance from a refit on all rows, ranked by impurity.
    pub importance: Option<Vec<ImportanceRow>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub task: Task,
    pub dataset: String,
    pub plan: PlanStamp,
    pub models: Vec<ModelResult>,
    pub version: String,
    /// Wall-clock seconds per model; kept out of the byte-stable files.
    #[serde(skip)]
    pub timings: Vec<(String, f64)>,
}

/// Loads the configured dataset, applying the schema, level order and drops.
pub fn load_dataset(cfg: &ExperimentConfig, config_dir: &Path, data_dir: &Path) -> Result<Dataset, CliError> {
    let path = cfg.data_path(config_dir, data_dir);
    if !path.is_file() {
        return Err(CliError::MissingData { dataset: cfg.dataset.name.clone(), path });
    }
    let schema = cfg
        .dataset
        .schema
        .iter()
        .fold(Schema::default(), |s, (col, kind)| s.with(col, (*kind).into()));
    let mut ds = load_csv(&path, Some(&schema))?;
    if !cfg.dataset.drop.is_empty() {
        ds = ds.drop_columns(&cfg.dataset.drop)?;
    }
    if cfg.dataset.sorted_levels {
        ds = ds.sort_levels();
    }
    Ok(ds)
}

/// Config with the command-line overrides applied.
pub fn effective_config(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentConfig, CliError> {
    let mut cfg = cfg.clone();
    if let Some(seed) = opts.seed {
        cfg.validation.seed = seed;
    }
    if let Some(k) = opts.folds {
        cfg.validation.folds = k;
    }
    cfg.validate().map_err(|e| CliError::Config(e, PathBuf::from("<command line>")))?;
    Ok(cfg)
}

pub fn fold_plan(cfg: &ExperimentConfig, dm: &DesignMatrix) -> CoreResult<FoldPlan> {
    let v = &cfg.validation;
    if cfg.task == Task::Classification && v.stratified {
        make_stratified_folds(dm.y.as_slice(), v.folds, v.seed)
    } else {
        make_folds(dm.n_rows(), v.folds, v.seed)
    }
}

fn design(ds: &Dataset, formula: &str, one_hot: bool) -> CoreResult<DesignMatrix> {
    let f = Formula::parse(formula)?;
    let f = if one_hot { f.with_coding(Coding::OneHot) } else { f };
    encode(ds, &f)
}

/// Runs the experiment and returns the report; nothing is written.
pub fn run_experiment(cfg: &ExperimentConfig, ds: &Dataset) -> Result<ExperimentReport, CliError> {
    let base = design(ds, &cfg.formula, false)?;
    let plan = fold_plan(cfg, &base)?;
    let loss = match cfg.task {
        Task::Classification => Loss::Misclass,
        Task::Regression => Loss::Squared,
    };
    if cfg.task == Task::Classification && !base.is_binary() {
        return Err(CliError::Usage(format!(
            "classification needs a 0/1 response; `{}` is not binary (use gt(..) or is(..))",
            base.response_name
        )));
    }

    let mut models = Vec::with_capacity(cfg.models.len());
    let mut timings = Vec::with_capacity(cfg.models.len());
    for m in &cfg.models {
        let start = Instant::now();
        let formula = m.formula.clone().unwrap_or_else(|| cfg.formula.clone());
        let dm = design(ds, &formula, m.kind.one_hot())?;
        if dm.n_rows() != base.n_rows() || dm.y != base.y {
            return Err(CliError::Usage(format!(
                "model `{}`: its formula must keep the experiment's response `{}`",
                m.label, base.response_name
            )));
        }
        let learner = build_learner(m, cfg.task, &dm, cfg.validation.seed);
        let cv = cross_validate(learner.as_ref(), &dm, &plan, loss.clone())?;
        let classification = match cfg.task {
            Task::Classification => Some(summarize(&cv.pooled, dm.y.as_slice())?),
            Task::Regression => None,
        };
        let importance = match &m.kind {
            ModelKind::Forest(p) if p.importance => {
                let config = forest_config(p, cfg.task, dm.predictor_columns().len(), true);
                Some(fit_forest(&dm, &config, cfg.validation.seed)?.ranked_by_impurity())
            }
            _ => None,
        };
        timings.push((m.label.clone(), start.elapsed().as_secs_f64()));
        models.push(ModelResult {
            label: m.label.clone(),
            kind: m.kind.name().to_string(),
            formula,
            n_columns: dm.n_cols(),
            cv,
            classification,
            importance,
        });
    }
    Ok(ExperimentReport {
        name: cfg.name.clone(),
        task: cfg.task,
        dataset: cfg.dataset.name.clone(),
        plan: PlanStamp {
            folds: plan.k,
            seed: plan.seed,
            stratified: plan.stratified,
            fingerprint: plan.fingerprint(),
            n_rows: plan.n(),
        },
        models,
        version: env!("CARGO_PKG_VERSION").to_string(),
        timings,
    })
}

fn rates(scores: &[f64], labels: &[f64], threshold: f64) -> Rates {
    let cm = confusion_at(scores, labels, threshold);
    Rates {
        threshold,
        sensitivity: cm.sensitivity(),
        specificity: cm.specificity(),
        accuracy: cm.accuracy(),
        kappa: kappa(&cm).ok(),
    }
}

fn summarize(scores: &[f64], labels: &[f64]) -> CoreResult<ClassSummary> {
    let curve = roc(scores, labels)?;
    let cutoff = optimal_cutoff(&curve);
    Ok(ClassSummary {
        auc: curve.auc,
        cutoff,
        at_half: rates(scores, labels, 0.5),
        at_cutoff: rates(scores, labels, cutoff.threshold),
        roc: curve,
    })
}

fn impurity(task: Task, entropy: bool) -> Impurity {
    match (task, entropy) {
        (Task::Regression, _) => Impurity::Variance,
        (Task::Classification, false) => Impurity::Gini,
        (Task::Classification, true) => Impurity::Entropy,
    }
}

/// Forest settings; unset node sizes follow the usual random-forest
/// defaults (leaves of one for classification, no split below five rows
/// for regression).
pub fn forest_config(p: &ForestParams, task: Task, n_predictors: usize, importance: bool) -> ForestConfig {
    let mut tree = TreeConfig::new(impurity(task, p.entropy));
    tree.min_leaf = p.min_leaf.unwrap_or(1);
    tree.min_split = p.min_split.unwrap_or(match task {
        Task::Classification => 2,
        Task::Regression => 5,
    });
    tree.mtry = Some(p.mtry.resolve(n_predictors, task).min(n_predictors));
    ForestConfig { n_trees: p.n_trees, tree, importance }
}

fn tree_config(p: &TreeParams, task: Task) -> TreeConfig {
    let mut tree = TreeConfig::new(impurity(task, p.entropy));
    tree.min_leaf = p.min_leaf.unwrap_or(tree.min_leaf);
    tree.min_split = p.min_split.unwrap_or(tree.min_split);
    tree.max_depth = p.max_depth;
    tree
}

fn boost_config(p: &BoostingParams, task: Task) -> BoostConfig {
    BoostConfig {
        loss: match task {
            Task::Classification => BoostLoss::Logistic,
            Task::Regression => BoostLoss::Squared,
        },
        n_trees: p.n_trees,
        depth: p.depth,
        shrinkage: p.shrinkage,
        min_leaf: p.min_leaf,
        subsample: p.subsample,
    }
}

fn additive_learner(p: &AdditiveParams) -> AdditiveLearner {
    let spec = match p.smoother {
        SmootherKind::Pspline => SmootherSpec::PSpline { df: p.df, segments: 20 },
        SmootherKind::Kernel => SmootherSpec::Kernel { kernel: Kernel::Gaussian },
    };
    AdditiveLearner {
        smooth: p.smooth.iter().map(|c| (c.clone(), spec.clone())).collect(),
        linear: p.linear.clone(),
        options: AdditiveOptions::default(),
    }
}

/// Bandwidth grid spanning 1/20 to 2 typical predictor standard deviations.
fn kernel_grid(p: &KernelParams, dm: &DesignMatrix) -> Vec<f64> {
    let cols = dm.predictor_columns();
    let n = dm.n_rows() as f64;
    let sd: f64 = cols
        .iter()
        .map(|&j| {
            let c = dm.x.column(j);
            let m = c.mean();
            (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt()
        })
        .sum::<f64>()
        / cols.len().max(1) as f64;
    let s = if sd > 0.0 { sd } else { 1.0 };
    log_grid(0.05 * s, 2.0 * s, p.grid_points)
}

fn svm_learner(label: &str, p: &SvmParams, seed: u64) -> SvmLearner {
    let kernel = match p.kernel {
        SvmKernelKind::Linear => svm::Kernel::Linear,
        SvmKernelKind::Rbf => svm::Kernel::Rbf { gamma: p.gamma },
    };
    let mut options = SvmOptions::new(p.c, kernel);
    options.seed = seed;
    SvmLearner { label: label.to_string(), options }
}

fn mlp_learner(label: &str, p: &MlpParams, task: Task, seed: u64) -> MlpLearner {
    let (output_activation, loss) = match task {
        Task::Classification => (Activation::Sigmoid, NetLoss::Logistic),
        Task::Regression => (Activation::Identity, NetLoss::Squared),
    };
    MlpLearner {
        label: label.to_string(),
        options: MlpOptions {
            hidden: p.hidden.clone(),
            hidden_activation: Activation::Tanh,
            output_activation,
            loss,
            epochs: p.epochs,
            schedule: Schedule { gamma0: p.gamma0, decay: p.decay },
            seed,
        },
    }
}

/// Maps SVM decision values `f(x)` to `1/(1+e^{-f})` so that the 0.5
/// threshold of the misclassification loss is the sign of `f`. The order of
/// the scores, hence the ROC curve, is unchanged.
struct SigmoidScores<L>(L);

struct SigmoidPredictor(Box<dyn Predictor>);

impl Predictor for SigmoidPredictor {
    fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        self.0.predict(x).into_iter().map(|f| 1.0 / (1.0 + (-f).exp())).collect()
    }
}

impl<L: Learner> Learner for SigmoidScores<L> {
    fn label(&self) -> String {
        self.0.label()
    }

    fn fit(&self, dm: &DesignMatrix) -> CoreResult<Box<dyn Predictor>> {
        Ok(Box::new(SigmoidPredictor(self.0.fit(dm)?)))
    }

    fn is_classifier(&self) -> bool {
        self.0.is_classifier()
    }
}

pub fn build_learner(m: &ModelConfig, task: Task, dm: &DesignMatrix, seed: u64) -> Box<dyn Learner> {
    let label = Some(m.label.clone());
    let p = dm.predictor_columns().len();
    match &m.kind {
        ModelKind::Ols => Box::new(OlsLearner { label }),
        ModelKind::Ridge(r) => Box::new(RidgeLearner { lambda: r.lambda }),
        ModelKind::Lasso(l) => Box::new(LassoLearner { lambda_ratio: l.lambda_ratio }),
        ModelKind::Logit => Box::new(GlmLearner { family: Family::BinomialLogit, label, drop_aliased: true }),
        ModelKind::Probit => Box::new(GlmLearner { family: Family::BinomialProbit, label, drop_aliased: true }),
        ModelKind::Poisson => Box::new(GlmLearner { family: Family::PoissonLog, label, drop_aliased: true }),
        ModelKind::Tree(t) => Box::new(TreeLearner { config: tree_config(t, task), seed }),
        ModelKind::Forest(f) => Box::new(ForestLearner {
            label: m.label.clone(),
            config: forest_config(f, task, p, false),
            seed,
        }),
        ModelKind::Boosting(b) => {
            Box::new(BoostingLearner { label: m.label.clone(), config: boost_config(b, task), seed })
        }
        ModelKind::Additive(a) => Box::new(additive_learner(a)),
        ModelKind::Knn(k) => Box::new(KnnLearner { k: k.k }),
        ModelKind::Kernel(k) => Box::new(KernelLearner { kernel: Kernel::Gaussian, grid: kernel_grid(k, dm) }),
        ModelKind::Svm(s) => Box::new(SigmoidScores(svm_learner(&m.label, s, seed))),
        ModelKind::Mlp(n) => Box::new(mlp_learner(&m.label, n, task, seed)),
    }
}
