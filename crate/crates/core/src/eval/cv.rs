use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataframe::folds::bootstrap_with;
use crate::dataframe::{DesignMatrix, FoldPlan};
use crate::error::{Error, Result};
use crate::eval::classify::roc;
use crate::eval::loss::Loss;
use crate::model::Learner;

/// Out-of-sample risk of one learner over a fold plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub label: String,
    pub loss: Loss,
    /// Risk on each validation block.
    pub fold_risks: Vec<f64>,
    /// Mean of `fold_risks`.
    pub risk: f64,
    /// Risk of each block's model on its own training rows.
    pub fold_in_sample_risks: Vec<f64>,
    /// Mean of `fold_in_sample_risks`.
    pub in_sample_risk: f64,
    /// Out-of-fold prediction for every row, in row order.
    pub pooled: Vec<f64>,
    /// AUC of the pooled predictions when the response is binary.
    pub auc: Option<f64>,
    pub seed: u64,
    pub stratified: bool,
    pub fold_fingerprint: String,
}

fn loss_on(loss: &Loss, y: &[f64], pred: &[f64]) -> f64 {
    if loss.uses_signed_labels() {
        let signed: Vec<f64> = y.iter().map(|&v| if v > 0.5 { 1.0 } else { -1.0 }).collect();
        loss.mean(&signed, pred)
    } else {
        loss.mean(y, pred)
    }
}

fn has_both_classes(y: &[f64]) -> bool {
    y.iter().any(|&v| v > 0.5) && y.iter().any(|&v| v <= 0.5)
}

/// k-fold cross-validation: block `j` is scored by a model fitted on the
/// other blocks. Blocks are fitted concurrently and reassembled in order,
/// so the report does not depend on scheduling.
pub fn cross_validate(
    learner: &dyn Learner,
    dm: &DesignMatrix,
    plan: &FoldPlan,
    loss: Loss,
) -> Result<CvReport> {
    loss.validate()?;
    if plan.n() != dm.n_rows() {
        return Err(Error::InvalidArgument(format!(
            "fold plan covers {} rows, design has {}",
            plan.n(),
            dm.n_rows()
        )));
    }
    let y = dm.y.as_slice();
    if learner.is_classifier() {
        for fold in 0..plan.k {
            let test: Vec<f64> = plan.test_rows(fold).iter().map(|&i| y[i]).collect();
            let train: Vec<f64> = plan.train_rows(fold).iter().map(|&i| y[i]).collect();
            if !has_both_classes(&test) || !has_both_classes(&train) {
                return Err(Error::FoldMissingClass { fold });
            }
        }
    }

    let per_fold: Vec<(Vec<usize>, Vec<f64>, f64)> = (0..plan.k)
        .into_par_iter()
        .map(|fold| -> Result<_> {
            let train_rows = plan.train_rows(fold);
            let test_rows = plan.test_rows(fold);
            let train = dm.subset_rows(&train_rows);
            let model = learner.fit(&train)?;
            let fitted = model.predict(&train.x);
            let in_sample = loss_on(&loss, train.y.as_slice(), &fitted);
            let pred = model.predict(&dm.x.select_rows(&test_rows));
            Ok((test_rows, pred, in_sample))
        })
        .collect::<Result<_>>()?;

    let mut pooled = vec![f64::NAN; dm.n_rows()];
    let mut fold_risks = Vec::with_capacity(plan.k);
    let mut fold_in_sample_risks = Vec::with_capacity(plan.k);
    for (rows, pred, in_sample) in per_fold {
        let ys: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
        fold_risks.push(loss_on(&loss, &ys, &pred));
        fold_in_sample_risks.push(in_sample);
        for (&i, p) in rows.iter().zip(pred) {
            pooled[i] = p;
        }
    }
    if let Some(i) = pooled.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    let auc = if dm.is_binary() && has_both_classes(y) {
        Some(roc(&pooled, y)?.auc)
    } else {
        None
    };
    Ok(CvReport {
        label: learner.label(),
        loss,
        risk: mean(&fold_risks),
        fold_risks,
        in_sample_risk: mean(&fold_in_sample_risks),
        fold_in_sample_risks,
        pooled,
        auc,
        seed: plan.seed,
        stratified: plan.stratified,
        fold_fingerprint: plan.fingerprint(),
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Bootstrap out-of-bag risk estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub label: String,
    pub loss: Loss,
    /// Mean loss over the rows left out of each replicate.
    pub replicate_risks: Vec<f64>,
    /// Mean of `replicate_risks`.
    pub risk: f64,
    pub seed: u64,
}

/// Fits on `b` bootstrap samples and scores each on its out-of-bag rows.
/// Replicate `r` draws from stream `r` of the master seed.
pub fn bootstrap_validate(
    learner: &dyn Learner,
    dm: &DesignMatrix,
    b: usize,
    seed: u64,
    loss: Loss,
) -> Result<BootstrapReport> {
    loss.validate()?;
    if b == 0 {
        return Err(Error::InvalidArgument("need at least one bootstrap replicate".into()));
    }
    let n = dm.n_rows();
    let replicate_risks: Vec<f64> = (0..b)
        .into_par_iter()
        .map(|r| -> Result<f64> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let sample = bootstrap_with(n, &mut rng, seed);
            if sample.out_of_bag.is_empty() {
                return Err(Error::Empty(format!("bootstrap replicate {r} has no out-of-bag rows")));
            }
            let model = learner.fit(&dm.subset_rows(&sample.in_bag))?;
            let pred = model.predict(&dm.x.select_rows(&sample.out_of_bag));
            let ys: Vec<f64> = sample.out_of_bag.iter().map(|&i| dm.y[i]).collect();
            Ok(loss_on(&loss, &ys, &pred))
        })
        .collect::<Result<_>>()?;
    Ok(BootstrapReport {
        label: learner.label(),
        loss,
        risk: mean(&replicate_risks),
        replicate_risks,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataframe::{make_folds, make_stratified_folds};
    use crate::model::{ConstantPredictor, FnLearner, Predictor};

    fn design(y: &[f64]) -> DesignMatrix {
        let rows: Vec<Vec<f64>> = (0..y.len()).map(|i| vec![i as f64]).collect();
        DesignMatrix::from_rows(&rows, y, true).unwrap()
    }

    fn zero() -> impl Learner {
        FnLearner::new("zero", |_: &DesignMatrix| {
            Ok(Box::new(ConstantPredictor(0.0)) as Box<dyn Predictor>)
        })
    }

    fn mean_learner() -> impl Learner {
        FnLearner::new("mean", |dm: &DesignMatrix| {
            Ok(Box::new(ConstantPredictor(dm.y.mean())) as Box<dyn Predictor>)
        })
    }

    #[test]
    fn zero_predictor_risk_is_mean_square() {
        let y: Vec<f64> = (0..20).map(|i| (i as f64 * 0.7).sin() * 3.0).collect();
        let dm = design(&y);
        let plan = make_folds(20, 4, 1).unwrap();
        let rep = cross_validate(&zero(), &dm, &plan, Loss::Squared).unwrap();
        let direct = y.iter().map(|v| v * v).sum::<f64>() / 20.0;
        // equal block sizes make the mean of block means the overall mean
        assert!((rep.risk - direct).abs() < 1e-12);
        assert_eq!(rep.risk, rep.fold_risks.iter().sum::<f64>() / 4.0);
        assert!(rep.pooled.iter().all(|&p| p == 0.0));
        assert!(rep.auc.is_none());
    }

    #[test]
    fn loo_mean_matches_closed_form() {
        // leaving row i out, the mean predictor errs by n/(n-1)·(y_i − ȳ)
        let y = [1.0, 4.0, 2.0, 8.0, 5.0, 7.0];
        let n = y.len() as f64;
        let ybar = y.iter().sum::<f64>() / n;
        let dm = design(&y);
        let plan = make_folds(6, 6, 0).unwrap();
        let rep = cross_validate(&mean_learner(), &dm, &plan, Loss::Squared).unwrap();
        let expected =
            y.iter().map(|v| (n / (n - 1.0) * (v - ybar)).powi(2)).sum::<f64>() / n;
        assert!((rep.risk - expected).abs() < 1e-12);
    }

    #[test]
    fn classifier_needs_both_classes_per_fold() {
        let y = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let dm = design(&y);
        let plan = make_folds(8, 4, 3).unwrap();
        let learner = zero();
        let clf = FnLearner::new("c", |_: &DesignMatrix| {
            Ok(Box::new(ConstantPredictor(0.5)) as Box<dyn Predictor>)
        })
        .classifier();
        assert!(matches!(
            cross_validate(&clf, &dm, &plan, Loss::Squared),
            Err(Error::FoldMissingClass { .. })
        ));
        assert!(cross_validate(&learner, &dm, &plan, Loss::Squared).is_ok());
    }

    #[test]
    fn pooled_auc_for_binary_response() {
        let y: Vec<f64> = (0..40).map(|i| f64::from(u8::from(i % 3 == 0))).collect();
        let dm = design(&y);
        let plan = make_stratified_folds(&y, 5, 2).unwrap();
        let oracle = FnLearner::new("oracle", |_: &DesignMatrix| {
            struct Peek;
            impl Predictor for Peek {
                fn predict(&self, x: &nalgebra::DMatrix<f64>) -> Vec<f64> {
                    (0..x.nrows()).map(|i| f64::from(u8::from(x[(i, 1)] as usize % 3 == 0))).collect()
                }
            }
            Ok(Box::new(Peek) as Box<dyn Predictor>)
        })
        .classifier();
        let rep = cross_validate(&oracle, &dm, &plan, Loss::Misclass).unwrap();
        assert_eq!(rep.auc, Some(1.0));
        assert_eq!(rep.risk, 0.0);
        assert!(rep.stratified);
    }

    #[test]
    fn bootstrap_is_reproducible_and_close_to_cv() {
        let y: Vec<f64> = (0..300).map(|i| ((i * 37) % 101) as f64 / 10.0).collect();
        let dm = design(&y);
        let a = bootstrap_validate(&mean_learner(), &dm, 200, 5, Loss::Squared).unwrap();
        let b = bootstrap_validate(&mean_learner(), &dm, 200, 5, Loss::Squared).unwrap();
        assert_eq!(a, b);
        let plan = make_folds(300, 10, 5).unwrap();
        let cv = cross_validate(&mean_learner(), &dm, &plan, Loss::Squared).unwrap();
        assert!((a.risk - cv.risk).abs() / cv.risk < 0.05, "{} vs {}", a.risk, cv.risk);
    }

    #[test]
    fn bootstrap_needs_out_of_bag_rows() {
        let dm = design(&[3.0]);
        assert!(bootstrap_validate(&mean_learner(), &dm, 1, 0, Loss::Squared).is_err());
    }
}
