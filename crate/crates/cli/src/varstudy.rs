//! Three orderings of the same candidate columns: forward stepwise logit by
//! AIC, order of entry along the lasso path, and forest impurity importance.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use twocultures::dataframe::{encode, Dataset, Formula};
use twocultures::linmod::{fit_lasso, stepwise, Criterion, Direction, Family, LassoOptions};
use twocultures::trees::{fit_forest, ImportanceRow};

use crate::config::{ExperimentConfig, ForestParams, Task, VarStudyConfig};
use crate::run::forest_config;
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepwiseEntry {
    pub variable: String,
    /// Criterion after adding the variable.
    pub criterion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoEntry {
    pub variable: String,
    pub lambda: f64,
    /// `lambda / lambda_max`.
    pub lambda_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarStudy {
    pub name: String,
    pub formula: String,
    pub n_rows: usize,
    /// Candidate columns (intercept excluded).
    pub n_candidates: usize,
    pub family: Family,
    pub criterion: Criterion,
    /// Criterion of the intercept-only model.
    pub initial_criterion: f64,
    pub stepwise: Vec<StepwiseEntry>,
    pub lasso_lambda_max: f64,
    pub lasso: Vec<LassoEntry>,
    pub forest: Vec<ImportanceRow>,
    pub forest_trees: usize,
    pub forest_mtry: usize,
    pub seed: u64,
    /// First stepwise variable equals the first lasso entrant.
    pub stepwise_lasso_agree: bool,
    /// The three lists start with the same variable.
    pub all_agree: bool,
}

/// Runs the study on the config's `varstudy` design (reference coding).
/// Classification tasks use a logit for stepwise selection and a Gini
/// forest; regression tasks use Gaussian least squares and a variance forest.
/// The lasso is always the Gaussian (least-squares) path.
pub fn variable_study(cfg: &ExperimentConfig, ds: &Dataset) -> Result<VarStudy, CliError> {
    let default = VarStudyConfig { formula: None, top: 10, n_trees: 500, mtry: Default::default() };
    let vs = cfg.varstudy.clone().unwrap_or(default);
    let formula = vs.formula.clone().unwrap_or_else(|| cfg.formula.clone());
    let dm = encode(ds, &Formula::parse(&formula)?)?;
    let family = match cfg.task {
        Task::Classification => Family::BinomialLogit,
        Task::Regression => Family::GaussianIdentity,
    };

    let trace = stepwise(&dm, family, Direction::Forward, Criterion::Aic)?;
    let steps: Vec<StepwiseEntry> = trace
        .steps
        .iter()
        .take(vs.top)
        .map(|s| StepwiseEntry { variable: s.variable.clone(), criterion: s.criterion })
        .collect();

    let path = fit_lasso(&dm, &LassoOptions { n_lambda: 200, ..Default::default() })?;
    let lasso: Vec<LassoEntry> = path
        .entries
        .iter()
        .take(vs.top)
        .map(|e| LassoEntry { variable: e.name.clone(), lambda: e.lambda, lambda_ratio: e.lambda / path.lambda_max })
        .collect();

    let p = dm.predictor_columns().len();
    let params = ForestParams {
        n_trees: vs.n_trees,
        mtry: vs.mtry.clone(),
        min_leaf: None,
        min_split: None,
        entropy: false,
        importance: true,
    };
    let fconfig = forest_config(&params, cfg.task, p, true);
    let forest = fit_forest(&dm, &fconfig, cfg.validation.seed)?;
    let ranked: Vec<ImportanceRow> = forest.ranked_by_impurity().into_iter().take(vs.top).collect();

    let first = |v: Option<&String>| v.cloned();
    let s0 = first(steps.first().map(|s| &s.variable));
    let l0 = first(lasso.first().map(|e| &e.variable));
    let f0 = first(ranked.first().map(|r| &r.variable));
    Ok(VarStudy {
        name: cfg.name.clone(),
        formula,
        n_rows: dm.n_rows(),
        n_candidates: p,
        family,
        criterion: Criterion::Aic,
        initial_criterion: trace.initial,
        stepwise: steps,
        lasso_lambda_max: path.lambda_max,
        lasso,
        forest: ranked,
        forest_trees: vs.n_trees,
        forest_mtry: forest.mtry,
        seed: cfg.validation.seed,
        stepwise_lasso_agree: s0.is_some() && s0 == l0,
        all_agree: s0.is_some() && s0 == l0 && l0 == f0,
    })
}

/// Side-by-side Markdown table of the three orderings.
pub fn render(study: &VarStudy) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# Variable study: {}\n", study.name);
    let _ = writeln!(
        s,
        "Design `{}`: n = {}, {} candidate columns. Intercept-only AIC {:.4}; lasso λ_max {:.6}; \
         forest of {} trees with mtry {}, seed {}.\n",
        study.formula,
        study.n_rows,
        study.n_candidates,
        study.initial_criterion,
        study.lasso_lambda_max,
        study.forest_trees,
        study.forest_mtry,
        study.seed
    );
    s.push_str("| rank | stepwise (AIC) | AIC | lasso entry | λ/λ_max | forest importance | impurity decrease |\n");
    s.push_str("|---|---|---|---|---|---|---|\n");
    let rows = study.stepwise.len().max(study.lasso.len()).max(study.forest.len());
    for k in 0..rows {
        let (sv, sc) = study
            .stepwise
            .get(k)
            .map_or((String::new(), String::new()), |e| (e.variable.clone(), format!("{:.4}", e.criterion)));
        let (lv, lr) = study
            .lasso
            .get(k)
            .map_or((String::new(), String::new()), |e| (e.variable.clone(), format!("{:.5}", e.lambda_ratio)));
        let (fv, fi) = study
            .forest
            .get(k)
            .map_or((String::new(), String::new()), |r| (r.variable.clone(), format!("{:.6}", r.impurity)));
        let _ = writeln!(s, "| {} | {sv} | {sc} | {lv} | {lr} | {fv} | {fi} |", k + 1);
    }
    let _ = writeln!(
        s,
        "\nFirst stepwise variable equals first lasso entrant: {}. All three lists start alike: {}.",
        if study.stepwise_lasso_agree { "yes" } else { "no" },
        if study.all_agree { "yes" } else { "no" }
    );
    s
}
