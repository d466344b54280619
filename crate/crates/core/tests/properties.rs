//! Statistical and algebraic properties checked across modules.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use twocultures::dataframe::{bootstrap, make_folds, DesignMatrix};
use twocultures::eval::{cross_validate, Loss};
use twocultures::linmod::{fit_glm, fit_ols, Family, OlsLearner};
use twocultures::linmod::sgd::Schedule;
use twocultures::mlp::{fit_mlp, Activation, MlpOptions, NetLoss, Network, NetworkSpec};
use twocultures::model::Predictor;
use twocultures::nonparam::{log_grid, select_bandwidth, Kernel};

fn noisy_sine(n: usize, sd: f64, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sd).unwrap();
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let y = x.iter().map(|&v| (2.0 * v).sin() + noise.sample(&mut rng)).collect();
    (x, y)
}

fn polynomial_design(x: &[f64], y: &[f64], degree: usize) -> DesignMatrix {
    let m = DMatrix::from_fn(x.len(), degree, |i, j| x[i].powi(j as i32 + 1));
    let names = (1..=degree).map(|d| format!("x^{d}")).collect();
    DesignMatrix::from_parts(m, DVector::from_column_slice(y), names, true).unwrap()
}

#[test]
fn bootstrap_is_reproducible_per_seed() {
    assert_eq!(bootstrap(500, 3), bootstrap(500, 3));
    assert_ne!(bootstrap(500, 3).in_bag, bootstrap(500, 4).in_bag);
    let b = bootstrap(500, 3);
    let mut all: Vec<usize> = b.in_bag.iter().chain(&b.out_of_bag).copied().collect();
    all.sort_unstable();
    all.dedup();
    assert_eq!(all, (0..500).collect::<Vec<_>>());
}

#[test]
fn flexibility_gives_u_shaped_validation_risk() {
    let (x, y) = noisy_sine(80, 0.4, 1);
    let plan = make_folds(x.len(), 10, 1).unwrap();
    let degrees = [1usize, 3, 5, 7, 12, 16];
    let mut out = Vec::new();
    let mut inn = Vec::new();
    for &d in &degrees {
        let rep = cross_validate(&OlsLearner { label: None }, &polynomial_design(&x, &y, d), &plan, Loss::Squared)
            .unwrap();
        out.push(rep.risk);
        inn.push(fit_ols(&polynomial_design(&x, &y, d)).unwrap().rss / x.len() as f64);
    }
    for w in inn.windows(2) {
        assert!(w[1] <= w[0] + 1e-12, "in-sample risk must fall with flexibility: {inn:?}");
    }
    let best = (0..out.len()).min_by(|&a, &b| out[a].total_cmp(&out[b])).unwrap();
    assert!(best > 0 && best < out.len() - 1, "validation risk {out:?} should bottom out inside the range");
    assert!(out[0] > out[best] && out[out.len() - 1] > out[best]);
}

#[test]
fn kernel_bandwidth_risk_is_u_shaped() {
    let (x, y) = noisy_sine(150, 0.3, 2);
    let xm = DMatrix::from_column_slice(x.len(), 1, &x);
    let grid = log_grid(0.01, 5.0, 25);
    let sel = select_bandwidth(&xm, &y, Kernel::Gaussian, &grid).unwrap();
    let k = grid.iter().position(|&h| h == sel.bandwidth).unwrap();
    assert!(k > 0 && k < grid.len() - 1, "selected {} at the edge of the grid", sel.bandwidth);
    assert!(sel.risks[0] > sel.risks[k] && sel.risks[grid.len() - 1] > sel.risks[k]);
    assert!(sel.risks[grid.len() - 1] > 0.3, "oversmoothing should approach the variance of y");
}

#[test]
fn mlp_fits_a_sine() {
    let (x, y) = noisy_sine(200, 0.0, 3);
    let dm = DesignMatrix::from_rows(&x.iter().map(|&v| vec![v]).collect::<Vec<_>>(), &y, true).unwrap();
    let opts = MlpOptions {
        hidden: vec![10],
        hidden_activation: Activation::Tanh,
        output_activation: Activation::Identity,
        loss: NetLoss::Squared,
        epochs: 1500,
        schedule: Schedule { gamma0: 0.05, decay: 0.01 },
        seed: 3,
    };
    let fit = fit_mlp(&dm, &opts).unwrap();
    let pred = fit.predict(&dm.x);
    let mse = pred.iter().zip(&y).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / y.len() as f64;
    assert!(mse < 0.05, "training MSE {mse}");
}

#[test]
fn linear_network_approaches_least_squares() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let xs: Vec<Vec<f64>> = (0..200).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
    let ys: Vec<f64> = xs.iter().map(|r| 0.5 + 1.5 * r[0] - 0.8 * r[1] + rng.random_range(-0.3..0.3)).collect();
    let spec = NetworkSpec { sizes: vec![2, 1], activations: vec![Activation::Identity], loss: NetLoss::Squared };
    let mut net = Network::new(spec, 4).unwrap();
    net.train(&xs, &ys, 400, Schedule { gamma0: 0.05, decay: 0.05 }, 4).unwrap();
    let ols = fit_ols(&DesignMatrix::from_rows(&xs, &ys, true).unwrap()).unwrap();
    let w = &net.weights[0];
    let got = [w[(0, 2)], w[(0, 0)], w[(0, 1)]];
    for (g, b) in got.iter().zip(&ols.beta) {
        assert!((g - b).abs() < 0.02, "network {got:?} vs OLS {:?}", ols.beta);
    }
}

#[test]
fn single_sigmoid_unit_matches_logit_boundary() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let xs: Vec<Vec<f64>> = (0..300).map(|_| vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]).collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|r| {
            let eta = 0.3 + 1.2 * r[0] + 0.7 * r[1];
            f64::from(u8::from(rng.random::<f64>() < 1.0 / (1.0 + (-eta).exp())))
        })
        .collect();
    let spec = NetworkSpec { sizes: vec![2, 1], activations: vec![Activation::Sigmoid], loss: NetLoss::Logistic };
    let mut net = Network::new(spec, 5).unwrap();
    net.train(&xs, &ys, 300, Schedule { gamma0: 0.1, decay: 0.05 }, 5).unwrap();
    let glm = fit_glm(&DesignMatrix::from_rows(&xs, &ys, true).unwrap(), Family::BinomialLogit).unwrap();
    let w = &net.weights[0];
    let angle = |a: f64, b: f64| b.atan2(a).to_degrees();
    let diff = (angle(w[(0, 0)], w[(0, 1)]) - angle(glm.beta[1], glm.beta[2])).abs();
    assert!(diff < 5.0, "boundary normals differ by {diff}°");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(30))]

    #[test]
    fn leave_one_out_cv_equals_hat_shortcut(seed in 0u64..10_000, n in 8usize..40, p in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let dm = DesignMatrix::from_rows(&rows, &y, true).unwrap();
        prop_assume!(p + 1 < n - 1);
        let plan = make_folds(n, n, seed).unwrap();
        let cv = cross_validate(&OlsLearner { label: None }, &dm, &plan, Loss::Squared).unwrap();
        let shortcut = fit_ols(&dm).unwrap().loocv_risk();
        prop_assert!((cv.risk - shortcut).abs() <= 1e-10 * shortcut.max(1.0));
    }

    #[test]
    fn folds_partition_the_rows(seed in 0u64..10_000, n in 2usize..200, k in 2usize..10) {
        prop_assume!(k <= n);
        let plan = make_folds(n, k, seed).unwrap();
        let mut all: Vec<usize> = (0..k).flat_map(|f| plan.test_rows(f)).collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        let sizes = plan.sizes();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }
}
