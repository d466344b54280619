//! Experiment configuration files (TOML, or JSON when the file ends in
//! `.json`).
//!
//! ```toml
//! name = "carseats"
//! task = "classification"            # or "regression"
//! formula = "gt(Sales, 8) ~ ."       # default formula for every model
//!
//! [dataset]
//! name = "carseats"                  # key understood by `twocultures fetch`
//! file = "carseats.csv"              # looked up in the data directory
//! drop = ["rownames"]
//!
//! [validation]
//! folds = 10
//! seed = 42
//! stratified = true
//!
//! [[models]]
//! label = "random forest"
//! kind = "forest"
//! n_trees = 500
//! ```
//!
//! Every model accepts `label`, `kind` and an optional `formula`; the other
//! keys depend on the kind (see [`ModelKind`]).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use twocultures::dataframe::{ColumnKind, Formula};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classification,
    Regression,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub task: Task,
    pub formula: String,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub validation: ValidationConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub models: Vec<ModelConfig>,
    #[serde(default)]
    pub varstudy: Option<VarStudyConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    /// Dataset key for `twocultures fetch`.
    pub name: String,
    /// File name inside the data directory.
    #[serde(default)]
    pub file: Option<String>,
    /// Path relative to the config file (for bundled data); wins over `file`.
    #[serde(default)]
    pub path: Option<String>,
    /// Public source of the raw data, for reference.
    #[serde(default)]
    pub url: Option<String>,
    #[serde(default)]
    pub drop: Vec<String>,
    /// Order categorical levels lexicographically instead of by first
    /// appearance (the first level is the reference category).
    #[serde(default)]
    pub sorted_levels: bool,
    /// Column-kind overrides.
    #[serde(default)]
    pub schema: BTreeMap<String, SchemaKind>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemaKind {
    Numeric,
    Categorical,
}

impl From<SchemaKind> for ColumnKind {
    fn from(k: SchemaKind) -> Self {
        match k {
            SchemaKind::Numeric => ColumnKind::Numeric,
            SchemaKind::Categorical => ColumnKind::Categorical,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationConfig {
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Stratify folds by class (classification only).
    #[serde(default = "yes")]
    pub stratified: bool,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self { folds: default_folds(), seed: default_seed(), stratified: true }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputConfig {
    /// Markdown table file name; defaults to `<name>.md`.
    #[serde(default)]
    pub table: Option<String>,
    /// Prefix of the ROC CSV files; defaults to `<name>_roc`.
    #[serde(default)]
    pub roc: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub label: String,
    /// Formula override for this model.
    #[serde(default)]
    pub formula: Option<String>,
    #[serde(flatten)]
    pub kind: ModelKind,
}

/// Number of candidate columns per split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Mtry {
    Count(usize),
    /// `"all"` (bagging) or `"default"` (⌊√p⌋ for classification,
    /// max(⌊p/3⌋, 1) for regression).
    Rule(MtryRule),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MtryRule {
    All,
    Default,
}

impl Default for Mtry {
    fn default() -> Self {
        Mtry::Rule(MtryRule::Default)
    }
}

impl Mtry {
    pub fn resolve(&self, p: usize, task: Task) -> usize {
        match self {
            Mtry::Count(m) => *m,
            Mtry::Rule(MtryRule::All) => p,
            Mtry::Rule(MtryRule::Default) => match task {
                Task::Classification => ((p as f64).sqrt().floor() as usize).max(1),
                Task::Regression => (p / 3).max(1),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SmootherKind {
    Pspline,
    Kernel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SvmKernelKind {
    Linear,
    Rbf,
}

macro_rules! params {
    ($(#[$meta:meta])* $name:ident { $($(#[$fmeta:meta])* $field:ident : $ty:ty),* $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
        pub struct $name {
            $($(#[$fmeta])* pub $field: $ty,)*
        }
    };
}

params!(RidgeParams { lambda: f64 });
params!(LassoParams {
    /// Penalty as a fraction of each training set's λ_max.
    lambda_ratio: f64,
});
params!(TreeParams {
    #[serde(default)] min_leaf: Option<usize>,
    #[serde(default)] min_split: Option<usize>,
    #[serde(default)] max_depth: Option<usize>,
    #[serde(default)] entropy: bool,
});
params!(ForestParams {
    #[serde(default = "default_trees")] n_trees: usize,
    #[serde(default)] mtry: Mtry,
    #[serde(default)] min_leaf: Option<usize>,
    #[serde(default)] min_split: Option<usize>,
    #[serde(default)] entropy: bool,
    /// Compute variable importance on a full-data refit.
    #[serde(default = "yes")] importance: bool,
});
params!(BoostingParams {
    #[serde(default = "default_boost_trees")] n_trees: usize,
    #[serde(default = "one_usize")] depth: usize,
    #[serde(default = "default_shrinkage")] shrinkage: f64,
    #[serde(default = "default_boost_leaf")] min_leaf: usize,
    #[serde(default = "one_f64")] subsample: f64,
});
params!(AdditiveParams {
    /// Design columns fitted by a univariate smoother.
    smooth: Vec<String>,
    /// Design columns entering linearly.
    #[serde(default)] linear: Vec<String>,
    #[serde(default = "default_smoother")] smoother: SmootherKind,
    /// Effective degrees of freedom of each spline (trace, constant included).
    #[serde(default = "default_df")] df: f64,
});
params!(KnnParams { k: usize });
params!(KernelParams { #[serde(default = "default_grid")] grid_points: usize });
params!(SvmParams {
    c: f64,
    #[serde(default = "default_svm_kernel")] kernel: SvmKernelKind,
    #[serde(default)] gamma: Option<f64>,
});
params!(MlpParams {
    hidden: Vec<usize>,
    #[serde(default = "default_epochs")] epochs: usize,
    #[serde(default = "default_gamma0")] gamma0: f64,
    #[serde(default)] decay: f64,
});

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelKind {
    Ols,
    Ridge(RidgeParams),
    Lasso(LassoParams),
    Logit,
    Probit,
    Poisson,
    Tree(TreeParams),
    Forest(ForestParams),
    Boosting(BoostingParams),
    Additive(AdditiveParams),
    Knn(KnnParams),
    Kernel(KernelParams),
    Svm(SvmParams),
    Mlp(MlpParams),
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Ols => "ols",
            ModelKind::Ridge(_) => "ridge",
            ModelKind::Lasso(_) => "lasso",
            ModelKind::Logit => "logit",
            ModelKind::Probit => "probit",
            ModelKind::Poisson => "poisson",
            ModelKind::Tree(_) => "tree",
            ModelKind::Forest(_) => "forest",
            ModelKind::Boosting(_) => "boosting",
            ModelKind::Additive(_) => "additive",
            ModelKind::Knn(_) => "knn",
            ModelKind::Kernel(_) => "kernel",
            ModelKind::Svm(_) => "svm",
            ModelKind::Mlp(_) => "mlp",
        }
    }

    /// Tree learners see one dummy per level so a split isolates one level.
    pub fn one_hot(&self) -> bool {
        matches!(self, ModelKind::Tree(_) | ModelKind::Forest(_) | ModelKind::Boosting(_))
    }
}

/// Forward stepwise, lasso path and forest importance on one design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarStudyConfig {
    /// Formula of the candidate design; defaults to the experiment formula.
    #[serde(default)]
    pub formula: Option<String>,
    #[serde(default = "default_top")]
    pub top: usize,
    #[serde(default = "default_trees")]
    pub n_trees: usize,
    #[serde(default)]
    pub mtry: Mtry,
}

fn default_folds() -> usize {
    10
}
fn default_seed() -> u64 {
    42
}
fn yes() -> bool {
    true
}
fn default_trees() -> usize {
    500
}
fn default_boost_trees() -> usize {
    100
}
fn one_usize() -> usize {
    1
}
fn one_f64() -> f64 {
    1.0
}
fn default_shrinkage() -> f64 {
    0.1
}
fn default_boost_leaf() -> usize {
    10
}
fn default_smoother() -> SmootherKind {
    SmootherKind::Pspline
}
fn default_df() -> f64 {
    5.0
}
fn default_grid() -> usize {
    30
}
fn default_svm_kernel() -> SvmKernelKind {
    SvmKernelKind::Rbf
}
fn default_epochs() -> usize {
    200
}
fn default_gamma0() -> f64 {
    0.05
}
fn default_top() -> usize {
    10
}

/// A configuration problem located by its field path (`models[2].n_trees`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() || self.path == "." {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

fn err(path: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError { path: path.into(), message: message.into() }
}

/// Keys each model kind accepts besides `label`, `kind` and `formula`.
fn model_keys(kind: &str) -> Option<&'static [&'static str]> {
    Some(match kind {
        "ols" | "logit" | "probit" | "poisson" => &[],
        "ridge" => &["lambda"],
        "lasso" => &["lambda_ratio"],
        "tree" => &["min_leaf", "min_split", "max_depth", "entropy"],
        "forest" => &["n_trees", "mtry", "min_leaf", "min_split", "entropy", "importance"],
        "boosting" => &["n_trees", "depth", "shrinkage", "min_leaf", "subsample"],
        "additive" => &["smooth", "linear", "smoother", "df"],
        "knn" => &["k"],
        "kernel" => &["grid_points"],
        "svm" => &["c", "kernel", "gamma"],
        "mlp" => &["hidden", "epochs", "gamma0", "decay"],
        _ => return None,
    })
}

const TOP_KEYS: &[&str] = &["name", "task", "formula", "dataset", "validation", "output", "models", "varstudy"];
const DATASET_KEYS: &[&str] = &["name", "file", "path", "url", "drop", "sorted_levels", "schema"];
const VALIDATION_KEYS: &[&str] = &["folds", "seed", "stratified"];
const OUTPUT_KEYS: &[&str] = &["table", "roc"];
const VARSTUDY_KEYS: &[&str] = &["formula", "top", "n_trees", "mtry"];

fn check_keys(value: &serde_json::Value, path: &str, allowed: &[&str]) -> Result<(), ConfigError> {
    if let Some(map) = value.as_object() {
        for key in map.keys() {
            if !allowed.contains(&key.as_str()) {
                let p = if path.is_empty() { key.clone() } else { format!("{path}.{key}") };
                return Err(err(p, "unknown key"));
            }
        }
    }
    Ok(())
}

/// Rejects keys that the typed configuration would silently ignore.
fn check_unknown_keys(v: &serde_json::Value) -> Result<(), ConfigError> {
    check_keys(v, "", TOP_KEYS)?;
    if let Some(d) = v.get("dataset") {
        check_keys(d, "dataset", DATASET_KEYS)?;
    }
    if let Some(d) = v.get("validation") {
        check_keys(d, "validation", VALIDATION_KEYS)?;
    }
    if let Some(d) = v.get("output") {
        check_keys(d, "output", OUTPUT_KEYS)?;
    }
    if let Some(d) = v.get("varstudy") {
        check_keys(d, "varstudy", VARSTUDY_KEYS)?;
    }
    if let Some(models) = v.get("models").and_then(|m| m.as_array()) {
        for (i, m) in models.iter().enumerate() {
            let path = format!("models[{i}]");
            let Some(kind) = m.get("kind").and_then(|k| k.as_str()) else {
                return Err(err(format!("{path}.kind"), "missing model kind"));
            };
            let Some(keys) = model_keys(kind) else {
                return Err(err(format!("{path}.kind"), format!("unknown model kind `{kind}`")));
            };
            let mut allowed: Vec<&str> = vec!["label", "kind", "formula"];
            allowed.extend_from_slice(keys);
            check_keys(m, &path, &allowed)?;
            let mut params = m.clone();
            if let Some(obj) = params.as_object_mut() {
                for k in ["label", "kind", "formula"] {
                    obj.remove(k);
                }
            }
            check_params(kind, params, &path)?;
        }
    }
    Ok(())
}

fn typed<T: serde::de::DeserializeOwned>(v: serde_json::Value, path: &str) -> Result<(), ConfigError> {
    serde_path_to_error::deserialize::<_, T>(v).map(|_| ()).map_err(|e| {
        let inner = e.path().to_string();
        let p = if inner == "." { path.to_string() } else { format!("{path}.{inner}") };
        err(p, e.into_inner().to_string())
    })
}

/// Deserializes a model's parameters on their own so type errors point at
/// the offending key.
fn check_params(kind: &str, v: serde_json::Value, path: &str) -> Result<(), ConfigError> {
    match kind {
        "ridge" => typed::<RidgeParams>(v, path),
        "lasso" => typed::<LassoParams>(v, path),
        "tree" => typed::<TreeParams>(v, path),
        "forest" => typed::<ForestParams>(v, path),
        "boosting" => typed::<BoostingParams>(v, path),
        "additive" => typed::<AdditiveParams>(v, path),
        "knn" => typed::<KnnParams>(v, path),
        "kernel" => typed::<KernelParams>(v, path),
        "svm" => typed::<SvmParams>(v, path),
        "mlp" => typed::<MlpParams>(v, path),
        _ => Ok(()),
    }
}

impl ExperimentConfig {
    /// Parses TOML (or JSON when `json` is set), then validates.
    pub fn parse(text: &str, json: bool) -> Result<Self, ConfigError> {
        let value: serde_json::Value = if json {
            serde_json::from_str(text).map_err(|e| err("", format!("invalid JSON: {e}")))?
        } else {
            toml::from_str(text).map_err(|e| err("", format!("invalid TOML: {}", e.message())))?
        };
        check_unknown_keys(&value)?;
        let cfg: Self = serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            err(path, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
        let json = path.extension().is_some_and(|e| e == "json");
        Self::parse(&text, json).map_err(|e| CliError::Config(e, path.to_path_buf()))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.name.trim().is_empty() {
            return Err(err("name", "must not be empty"));
        }
        Formula::parse(&self.formula).map_err(|e| err("formula", e.to_string()))?;
        if self.dataset.file.is_none() && self.dataset.path.is_none() {
            return Err(err("dataset", "one of `file` or `path` is required"));
        }
        if self.validation.folds < 2 {
            return Err(err("validation.folds", "need at least 2 folds"));
        }
        let mut labels = BTreeSet::new();
        for (i, m) in self.models.iter().enumerate() {
            let p = |field: &str| format!("models[{i}].{field}");
            if !labels.insert(m.label.as_str()) {
                return Err(err(p("label"), format!("duplicate label `{}`", m.label)));
            }
            if let Some(f) = &m.formula {
                Formula::parse(f).map_err(|e| err(p("formula"), e.to_string()))?;
            }
            validate_kind(&m.kind, self.task, &p)?;
        }
        if let Some(vs) = &self.varstudy {
            if let Some(f) = &vs.formula {
                Formula::parse(f).map_err(|e| err("varstudy.formula", e.to_string()))?;
            }
            if vs.n_trees == 0 {
                return Err(err("varstudy.n_trees", "must be at least 1"));
            }
            if vs.mtry == Mtry::Count(0) {
                return Err(err("varstudy.mtry", "must be at least 1"));
            }
        }
        Ok(())
    }

    /// Data file referenced by the config.
    pub fn data_path(&self, config_dir: &Path, data_dir: &Path) -> PathBuf {
        match (&self.dataset.path, &self.dataset.file) {
            (Some(p), _) => config_dir.join(p),
            (None, Some(f)) => data_dir.join(f),
            (None, None) => data_dir.join(format!("{}.csv", self.dataset.name)),
        }
    }
}

fn validate_kind(kind: &ModelKind, task: Task, p: &dyn Fn(&str) -> String) -> Result<(), ConfigError> {
    let positive = |v: f64, field: &str| {
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(err(p(field), format!("must be positive, got {v}")))
        }
    };
    let at_least_one = |v: usize, field: &str| {
        if v >= 1 {
            Ok(())
        } else {
            Err(err(p(field), "must be at least 1"))
        }
    };
    let classification_only = |name: &str| {
        if task == Task::Classification {
            Ok(())
        } else {
            Err(err(p("kind"), format!("`{name}` needs a classification task")))
        }
    };
    match kind {
        ModelKind::Ols | ModelKind::Poisson => Ok(()),
        ModelKind::Logit | ModelKind::Probit => classification_only(kind.name()),
        ModelKind::Ridge(RidgeParams { lambda }) => {
            if *lambda >= 0.0 && lambda.is_finite() {
                Ok(())
            } else {
                Err(err(p("lambda"), "must be non-negative"))
            }
        }
        ModelKind::Lasso(LassoParams { lambda_ratio }) => {
            if *lambda_ratio > 0.0 && *lambda_ratio <= 1.0 {
                Ok(())
            } else {
                Err(err(p("lambda_ratio"), "must lie in (0, 1]"))
            }
        }
        ModelKind::Tree(TreeParams { min_leaf, max_depth, .. }) => {
            at_least_one(min_leaf.unwrap_or(1), "min_leaf")?;
            if *max_depth == Some(0) {
                return Err(err(p("max_depth"), "must be at least 1"));
            }
            Ok(())
        }
        ModelKind::Forest(ForestParams { n_trees, mtry, min_leaf, .. }) => {
            at_least_one(*n_trees, "n_trees")?;
            at_least_one(min_leaf.unwrap_or(1), "min_leaf")?;
            if *mtry == Mtry::Count(0) {
                return Err(err(p("mtry"), "must be at least 1"));
            }
            Ok(())
        }
        ModelKind::Boosting(BoostingParams { n_trees, depth, shrinkage, min_leaf, subsample }) => {
            at_least_one(*n_trees, "n_trees")?;
            at_least_one(*depth, "depth")?;
            at_least_one(*min_leaf, "min_leaf")?;
            if !(*shrinkage > 0.0 && *shrinkage <= 1.0) {
                return Err(err(p("shrinkage"), "must lie in (0, 1]"));
            }
            if !(*subsample > 0.0 && *subsample <= 1.0) {
                return Err(err(p("subsample"), "must lie in (0, 1]"));
            }
            Ok(())
        }
        ModelKind::Additive(AdditiveParams { smooth, df, .. }) => {
            if smooth.is_empty() {
                return Err(err(p("smooth"), "needs at least one smooth term"));
            }
            if !(*df > 2.0) {
                return Err(err(p("df"), "must exceed 2"));
            }
            Ok(())
        }
        ModelKind::Knn(KnnParams { k }) => at_least_one(*k, "k"),
        ModelKind::Kernel(KernelParams { grid_points }) => {
            if *grid_points >= 2 {
                Ok(())
            } else {
                Err(err(p("grid_points"), "must be at least 2"))
            }
        }
        ModelKind::Svm(SvmParams { c, gamma, .. }) => {
            classification_only("svm")?;
            positive(*c, "c")?;
            if let Some(g) = gamma {
                positive(*g, "gamma")?;
            }
            Ok(())
        }
        ModelKind::Mlp(MlpParams { hidden, epochs, gamma0, decay }) => {
            if hidden.contains(&0) {
                return Err(err(p("hidden"), "layer widths must be at least 1"));
            }
            at_least_one(*epochs, "epochs")?;
            positive(*gamma0, "gamma0")?;
            if *decay < 0.0 {
                return Err(err(p("decay"), "must be non-negative"));
            }
            Ok(())
        }
    }
}
