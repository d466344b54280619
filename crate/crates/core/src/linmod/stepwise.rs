use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataframe::DesignMatrix;
use crate::error::{Error, Result};
use crate::linmod::glm::{fit_glm, Family};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Aic,
    Bic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub column: usize,
    pub variable: String,
    /// Criterion of the model after the move.
    pub criterion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepwiseTrace {
    pub direction: Direction,
    pub criterion: Criterion,
    /// Criterion of the starting model.
    pub initial: f64,
    pub steps: Vec<Step>,
    /// Selected design columns, intercept included when present.
    pub final_model: Vec<usize>,
}

/// Criterion of the GLM on `cols`, or `None` when the columns are
/// rank deficient.
pub fn subset_criterion(
    dm: &DesignMatrix,
    family: Family,
    criterion: Criterion,
    cols: &[usize],
) -> Result<Option<f64>> {
    let n = dm.n_rows() as f64;
    let (deviance, k) = if cols.is_empty() {
        // η = 0 for every row
        let mu = family.inverse_link(0.0);
        let d: f64 = dm.y.iter().map(|&y| family.unit_deviance(y, mu)).sum();
        let m2ll = if family == Family::GaussianIdentity {
            n * ((2.0 * std::f64::consts::PI * d / n).ln() + 1.0)
        } else if family == Family::PoissonLog {
            dm.y.iter().map(|&y| -2.0 * (y * mu.ln() - mu - libm::lgamma(y + 1.0))).sum()
        } else {
            d
        };
        (m2ll, 0.0)
    } else {
        let mut sub = dm.select_columns(cols);
        sub.has_intercept = dm.has_intercept && cols.first() == Some(&0);
        match fit_glm(&sub, family) {
            Ok(fit) => (-2.0 * fit.log_lik, cols.len() as f64),
            Err(Error::RankDeficient { .. }) => return Ok(None),
            Err(e) => return Err(e),
        }
    };
    let penalty = match criterion {
        Criterion::Aic => 2.0,
        Criterion::Bic => n.ln(),
    };
    Ok(Some(deviance + penalty * k))
}

/// Greedy selection over individual design columns. Forward starts from the
/// intercept-only model and adds; backward starts from the full model and
/// drops. The intercept is never a candidate. Each step takes the move with
/// the lowest criterion (lowest column index on exact ties) and only strict
/// improvements are accepted.
pub fn stepwise(
    dm: &DesignMatrix,
    family: Family,
    direction: Direction,
    criterion: Criterion,
) -> Result<StepwiseTrace> {
    let preds = dm.predictor_columns();
    let base: Vec<usize> = if dm.has_intercept { vec![0] } else { Vec::new() };
    let mut current: Vec<usize> = match direction {
        Direction::Forward => base.clone(),
        Direction::Backward => (0..dm.n_cols()).collect(),
    };
    let initial = subset_criterion(dm, family, criterion, &current)?.ok_or_else(|| {
        Error::RankDeficient { column: "starting model is rank deficient".into() }
    })?;
    let mut best_value = initial;
    let mut steps = Vec::new();
    loop {
        let moves: Vec<usize> = match direction {
            Direction::Forward => preds.iter().copied().filter(|c| !current.contains(c)).collect(),
            Direction::Backward => preds.iter().copied().filter(|c| current.contains(c)).collect(),
        };
        if moves.is_empty() {
            break;
        }
        let scored: Vec<Option<f64>> = moves
            .par_iter()
            .map(|&c| {
                let mut cols: Vec<usize> = match direction {
                    Direction::Forward => current.iter().copied().chain([c]).collect(),
                    Direction::Backward => current.iter().copied().filter(|&k| k != c).collect(),
                };
                cols.sort_unstable();
                subset_criterion(dm, family, criterion, &cols)
            })
            .collect::<Result<_>>()?;
        let mut choice: Option<(usize, f64)> = None;
        for (&c, value) in moves.iter().zip(scored) {
            if let Some(v) = value {
                if choice.map_or(true, |(_, b)| v < b) {
                    choice = Some((c, v));
                }
            }
        }
        match choice {
            Some((c, v)) if v < best_value => {
                match direction {
                    Direction::Forward => {
                        current.push(c);
                        current.sort_unstable();
                    }
                    Direction::Backward => current.retain(|&k| k != c),
                }
                best_value = v;
                steps.push(Step { column: c, variable: dm.column_names[c].clone(), criterion: v });
            }
            _ => break,
        }
    }
    Ok(StepwiseTrace { direction, criterion, initial, steps, final_model: current })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dominant_column_enters_first() {
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|i| vec![((i * 7) % 5) as f64, (i as f64).sin(), ((i * 3) % 4) as f64])
            .collect();
        let y: Vec<f64> = rows.iter().map(|r| r[1] * 5.0).collect();
        let dm = DesignMatrix::from_rows(&rows, &y, true).unwrap();
        let tr = stepwise(&dm, Family::GaussianIdentity, Direction::Forward, Criterion::Aic).unwrap();
        assert_eq!(tr.steps[0].variable, "x2");
        for w in tr.steps.windows(2) {
            assert!(w[1].criterion < w[0].criterion);
        }
        assert!(tr.steps[0].criterion < tr.initial);
    }

    #[test]
    fn intercept_only_aic_adds_two() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| ((i * 7) % 3) as f64).collect();
        let dm = DesignMatrix::from_rows(&rows, &y, true).unwrap();
        let fit = crate::linmod::fit_glm(&dm.select_columns(&[0]), Family::GaussianIdentity).unwrap();
        let aic = subset_criterion(&dm, Family::GaussianIdentity, Criterion::Aic, &[0]).unwrap().unwrap();
        assert!((aic - (-2.0 * fit.log_lik + 2.0)).abs() < 1e-12);
    }
}
