//! The perceptron and small feed-forward networks trained by stochastic
//! gradient descent with exact backpropagation.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataframe::{DesignMatrix, Standardization};
use crate::error::{Error, Result};
use crate::eval::loss::softplus;
use crate::linmod::Schedule;
use crate::model::{Learner, Predictor};

/// Result of the mistake-driven perceptron.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerceptronFit {
    pub column_names: Vec<String>,
    pub beta: Vec<f64>,
    pub epochs: usize,
    /// True when an epoch finished without a training mistake.
    pub converged: bool,
    pub training_errors: usize,
}

fn sign(t: f64) -> f64 {
    if t > 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Cyclic perceptron on the ±1 view of a 0/1 response: each misclassified
/// row triggers `β ← β + η (y_i − ŷ_i) x_i`. Columns of the design are used
/// as given, so include the intercept column to learn an offset.
pub fn fit_perceptron(dm: &DesignMatrix, eta: f64, max_epochs: usize) -> Result<PerceptronFit> {
    if !(eta > 0.0) {
        return Err(Error::InvalidArgument(format!("learning rate must be positive, got {eta}")));
    }
    if !dm.is_binary() {
        return Err(Error::InvalidArgument("the perceptron needs a 0/1 response".into()));
    }
    let y = dm.signed_y();
    let (n, p) = (dm.n_rows(), dm.n_cols());
    let mut beta = vec![0.0; p];
    let score = |beta: &[f64], i: usize| (0..p).map(|j| beta[j] * dm.x[(i, j)]).sum::<f64>();
    let mut epochs = 0;
    let mut converged = false;
    while epochs < max_epochs {
        epochs += 1;
        let mut mistakes = 0;
        for i in 0..n {
            let yhat = sign(score(&beta, i));
            if yhat != y[i] {
                mistakes += 1;
                for (j, b) in beta.iter_mut().enumerate() {
                    *b += eta * (y[i] - yhat) * dm.x[(i, j)];
                }
            }
        }
        if mistakes == 0 {
            converged = true;
            break;
        }
    }
    let training_errors = (0..n).filter(|&i| sign(score(&beta, i)) != y[i]).count();
    Ok(PerceptronFit { column_names: dm.column_names.clone(), beta, epochs, converged, training_errors })
}

impl Predictor for PerceptronFit {
    /// Linear score `xᵀβ`; its sign is the predicted label.
    fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        (0..x.nrows()).map(|i| self.beta.iter().enumerate().map(|(j, b)| b * x[(i, j)]).sum()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => crate::eval::loss::sigmoid(z),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation's output.
    fn derivative_from_output(self, o: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - o * o,
            Activation::Sigmoid => o * (1.0 - o),
            Activation::Identity => 1.0,
        }
    }
}

/// Training loss of a single-output network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetLoss {
    /// `(y − o)²`.
    Squared,
    /// Cross-entropy `−y log o − (1 − y) log(1 − o)` on a 0/1 target; the
    /// output layer must be a sigmoid.
    Logistic,
    /// `max(0, 1 − y o)` on the ±1 view of a 0/1 target.
    Hinge,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// Layer widths `p₀, …, p_K`; `p₀` is the input size and `p_K = 1`.
    pub sizes: Vec<usize>,
    /// One activation per non-input layer.
    pub activations: Vec<Activation>,
    pub loss: NetLoss,
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<()> {
        if self.sizes.len() < 2 || self.sizes.contains(&0) {
            return Err(Error::InvalidArgument("a network needs an input and an output layer of positive width".into()));
        }
        if self.activations.len() != self.sizes.len() - 1 {
            return Err(Error::InvalidArgument(format!(
                "{} activations given for {} layers",
                self.activations.len(),
                self.sizes.len() - 1
            )));
        }
        if *self.sizes.last().expect("non-empty") != 1 {
            return Err(Error::InvalidArgument("the output layer must have width 1".into()));
        }
        if self.loss == NetLoss::Logistic && self.activations.last() != Some(&Activation::Sigmoid) {
            return Err(Error::InvalidArgument("logistic loss needs a sigmoid output layer".into()));
        }
        Ok(())
    }
}

/// Feed-forward network; layer `k` maps `o_{k−1}` to `a_k(W_k [o_{k−1}; 1])`
/// with `W_k` of shape `p_k × (p_{k−1} + 1)` (bias in the last column).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub spec: NetworkSpec,
    pub weights: Vec<DMatrix<f64>>,
}

/// Pre-activations and outputs of every layer for one input.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardPass {
    /// `pre[k]` for layers 1..=K (index 0 unused and empty).
    pub pre: Vec<Vec<f64>>,
    /// `outputs[0]` is the input, `outputs[K]` the network output.
    pub outputs: Vec<Vec<f64>>,
}

impl Network {
    /// Weights drawn uniformly in `[−1/√fan_in, 1/√fan_in]`, fan-in
    /// counting the bias input.
    pub fn new(spec: NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = spec
            .sizes
            .windows(2)
            .map(|w| {
                let bound = 1.0 / ((w[0] + 1) as f64).sqrt();
                DMatrix::from_fn(w[1], w[0] + 1, |_, _| rng.random_range(-bound..=bound))
            })
            .collect();
        Ok(Self { spec, weights })
    }

    pub fn zeros(spec: NetworkSpec) -> Result<Self> {
        spec.validate()?;
        let weights = spec.sizes.windows(2).map(|w| DMatrix::zeros(w[1], w[0] + 1)).collect();
        Ok(Self { spec, weights })
    }

    pub fn n_weights(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum()
    }

    pub fn forward(&self, x: &[f64]) -> ForwardPass {
        let mut pre = vec![Vec::new()];
        let mut outputs = vec![x.to_vec()];
        for (w, act) in self.weights.iter().zip(&self.spec.activations) {
            let input = outputs.last().expect("input present");
            let nin = input.len();
            let z: Vec<f64> = (0..w.nrows())
                .map(|r| (0..nin).map(|c| w[(r, c)] * input[c]).sum::<f64>() + w[(r, nin)])
                .collect();
            outputs.push(z.iter().map(|&v| act.apply(v)).collect());
            pre.push(z);
        }
        ForwardPass { pre, outputs }
    }

    pub fn output(&self, x: &[f64]) -> f64 {
        self.forward(x).outputs.last().expect("output layer")[0]
    }

    fn loss_value(&self, y: f64, pass: &ForwardPass) -> f64 {
        let o = pass.outputs.last().expect("output")[0];
        match self.spec.loss {
            NetLoss::Squared => (y - o).powi(2),
            NetLoss::Logistic => softplus(pass.pre.last().expect("output")[0]) - y * pass.pre.last().expect("output")[0],
            NetLoss::Hinge => (1.0 - sign_label(y) * o).max(0.0),
        }
    }

    /// Derivative of the loss with respect to the output pre-activation.
    fn output_delta(&self, y: f64, pass: &ForwardPass) -> f64 {
        let o = pass.outputs.last().expect("output")[0];
        let act = *self.spec.activations.last().expect("output activation");
        match self.spec.loss {
            NetLoss::Squared => 2.0 * (o - y) * act.derivative_from_output(o),
            NetLoss::Logistic => o - y,
            NetLoss::Hinge => {
                let s = sign_label(y);
                if s * o < 1.0 {
                    -s * act.derivative_from_output(o)
                } else {
                    0.0
                }
            }
        }
    }

    /// Empirical risk `(1/n) Σ ℓ(y_i, F(x_i))`; targets are 0/1 for the
    /// classification losses.
    pub fn risk(&self, xs: &[Vec<f64>], ys: &[f64]) -> f64 {
        xs.iter().zip(ys).map(|(x, &y)| self.loss_value(y, &self.forward(x))).sum::<f64>() / xs.len().max(1) as f64
    }

    fn accumulate(&self, x: &[f64], y: f64, scale: f64, grads: &mut [DMatrix<f64>]) {
        let pass = self.forward(x);
        let k_max = self.weights.len();
        let mut delta = vec![self.output_delta(y, &pass)];
        for k in (0..k_max).rev() {
            let input = &pass.outputs[k];
            let nin = input.len();
            let g = &mut grads[k];
            for (r, d) in delta.iter().enumerate() {
                for c in 0..nin {
                    g[(r, c)] += scale * d * input[c];
                }
                g[(r, nin)] += scale * d;
            }
            if k == 0 {
                break;
            }
            let w = &self.weights[k];
            let act = self.spec.activations[k - 1];
            delta = (0..nin)
                .map(|c| {
                    let back: f64 = delta.iter().enumerate().map(|(r, d)| w[(r, c)] * d).sum();
                    back * act.derivative_from_output(input[c])
                })
                .collect();
        }
    }

    /// Gradient of the empirical risk over a batch, one matrix per layer.
    pub fn gradient(&self, xs: &[Vec<f64>], ys: &[f64]) -> Vec<DMatrix<f64>> {
        let mut grads: Vec<DMatrix<f64>> = self.weights.iter().map(|w| DMatrix::zeros(w.nrows(), w.ncols())).collect();
        let scale = 1.0 / xs.len().max(1) as f64;
        for (x, &y) in xs.iter().zip(ys) {
            self.accumulate(x, y, scale, &mut grads);
        }
        grads
    }

    /// Per-example SGD: each epoch shuffles the rows, then steps
    /// `W ← W − γ_t ∇ℓ(y_i, F(x_i))`. Returns the training risk before the
    /// first epoch and after each epoch.
    pub fn train(&mut self, xs: &[Vec<f64>], ys: &[f64], epochs: usize, schedule: Schedule, seed: u64) -> Result<Vec<f64>> {
        if !(schedule.gamma0 > 0.0) || schedule.decay < 0.0 {
            return Err(Error::InvalidArgument("learning rate must be positive".into()));
        }
        if xs.len() != ys.len() {
            return Err(Error::InvalidArgument("inputs and targets differ in length".into()));
        }
        if let Some(x) = xs.iter().find(|x| x.len() != self.spec.sizes[0]) {
            return Err(Error::InvalidArgument(format!("input of width {} for a network expecting {}", x.len(), self.spec.sizes[0])));
        }
        let n = xs.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..n).collect();
        let mut trace = vec![self.risk(xs, ys)];
        let mut grads: Vec<DMatrix<f64>> = self.weights.iter().map(|w| DMatrix::zeros(w.nrows(), w.ncols())).collect();
        let mut step = 0usize;
        for epoch in 0..epochs {
            order.shuffle(&mut rng);
            for &i in &order {
                let gamma = schedule.at(step as f64 / n as f64);
                step += 1;
                for g in &mut grads {
                    g.fill(0.0);
                }
                self.accumulate(&xs[i], ys[i], 1.0, &mut grads);
                for (w, g) in self.weights.iter_mut().zip(&grads) {
                    *w -= g * gamma;
                }
            }
            if self.weights.iter().any(|w| w.iter().any(|v| !v.is_finite())) {
                return Err(Error::NonFinite(epoch + 1));
            }
            trace.push(self.risk(xs, ys));
        }
        Ok(trace)
    }
}

fn sign_label(y: f64) -> f64 {
    if y > 0.5 {
        1.0
    } else {
        -1.0
    }
}

/// Network bound to the design columns it reads, with inputs standardized
/// by the training means and standard deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedNetwork {
    pub network: Network,
    pub columns: Vec<usize>,
    pub standardization: Standardization,
    pub risk_trace: Vec<f64>,
}

impl FittedNetwork {
    fn inputs(&self, x: &DMatrix<f64>) -> Vec<Vec<f64>> {
        let sub = x.select_columns(&self.columns);
        let z = self.standardization.apply(&sub);
        (0..z.nrows()).map(|i| z.row(i).iter().copied().collect()).collect()
    }
}

impl Predictor for FittedNetwork {
    /// Network output: a fitted value, or a probability for a sigmoid output.
    fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        self.inputs(x).iter().map(|r| self.network.output(r)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpOptions {
    /// Hidden layer widths.
    pub hidden: Vec<usize>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
    pub loss: NetLoss,
    pub epochs: usize,
    pub schedule: Schedule,
    pub seed: u64,
}

pub fn fit_mlp(dm: &DesignMatrix, opts: &MlpOptions) -> Result<FittedNetwork> {
    let columns = dm.predictor_columns();
    let mut sizes = vec![columns.len()];
    sizes.extend(&opts.hidden);
    sizes.push(1);
    let mut activations = vec![opts.hidden_activation; opts.hidden.len()];
    activations.push(opts.output_activation);
    let spec = NetworkSpec { sizes, activations, loss: opts.loss };
    if opts.loss != NetLoss::Squared && !dm.is_binary() {
        return Err(Error::InvalidArgument("classification losses need a 0/1 response".into()));
    }
    let mut network = Network::new(spec, opts.seed)?;
    let sub = dm.x.select_columns(&columns);
    let standardization = Standardization::fit(&sub, true);
    let z = standardization.apply(&sub);
    let xs: Vec<Vec<f64>> = (0..z.nrows()).map(|i| z.row(i).iter().copied().collect()).collect();
    let risk_trace = network.train(&xs, dm.y.as_slice(), opts.epochs, opts.schedule, opts.seed)?;
    Ok(FittedNetwork { network, columns, standardization, risk_trace })
}

#[derive(Debug, Clone)]
pub struct MlpLearner {
    pub label: String,
    pub options: MlpOptions,
}

impl Learner for MlpLearner {
    fn label(&self) -> String {
        self.label.clone()
    }

    fn fit(&self, dm: &DesignMatrix) -> Result<Box<dyn Predictor>> {
        Ok(Box::new(fit_mlp(dm, &self.options)?))
    }

    fn is_classifier(&self) -> bool {
        self.options.loss != NetLoss::Squared
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(sizes: &[usize], acts: &[Activation], loss: NetLoss) -> NetworkSpec {
        NetworkSpec { sizes: sizes.to_vec(), activations: acts.to_vec(), loss }
    }

    #[test]
    fn perceptron_separable_and_xor() {
        let dm = DesignMatrix::from_rows(&[vec![-1.0], vec![1.0]], &[0.0, 1.0], true).unwrap();
        let f = fit_perceptron(&dm, 0.5, 100).unwrap();
        assert!(f.converged && f.training_errors == 0);

        let xor = DesignMatrix::from_rows(
            &[vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]],
            &[0.0, 0.0, 1.0, 1.0],
            true,
        )
        .unwrap();
        let f = fit_perceptron(&xor, 0.5, 200).unwrap();
        assert!(!f.converged);
        assert_eq!(f.epochs, 200);
    }

    #[test]
    fn perceptron_blobs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..100 {
            let c = (i % 2) as f64;
            let s = if c > 0.0 { 2.5 } else { -2.5 };
            rows.push(vec![s + rng.random_range(-1.0..1.0), -s + rng.random_range(-1.0..1.0)]);
            y.push(c);
        }
        let dm = DesignMatrix::from_rows(&rows, &y, true).unwrap();
        let f = fit_perceptron(&dm, 1.0, 1000).unwrap();
        assert!(f.converged);
        assert!(f.epochs < 1000);
    }

    #[test]
    fn forward_reductions() {
        let mut lin = Network::zeros(spec(&[2, 1], &[Activation::Identity], NetLoss::Squared)).unwrap();
        lin.weights[0] = DMatrix::from_row_slice(1, 3, &[2.0, -1.0, 0.5]);
        assert_eq!(lin.output(&[3.0, 4.0]), 2.0 * 3.0 - 4.0 + 0.5);

        let mut neuron = Network::zeros(spec(&[1, 1], &[Activation::Tanh], NetLoss::Squared)).unwrap();
        neuron.weights[0] = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        assert_eq!(neuron.output(&[0.0]), 0.0);

        let z = Network::zeros(spec(&[3, 4, 1], &[Activation::Tanh, Activation::Tanh], NetLoss::Squared)).unwrap();
        assert_eq!(z.output(&[1.0, -2.0, 0.3]), 0.0);
    }

    #[test]
    fn pinned_two_three_one() {
        let mut net = Network::zeros(spec(&[2, 3, 1], &[Activation::Tanh, Activation::Identity], NetLoss::Squared)).unwrap();
        net.weights[0] = DMatrix::from_row_slice(3, 3, &[0.1, 0.2, 0.0, -0.3, 0.4, 0.1, 0.5, -0.6, -0.2]);
        net.weights[1] = DMatrix::from_row_slice(1, 4, &[1.0, -1.0, 0.5, 0.25]);
        let (x1, x2) = (1.0_f64, 2.0_f64);
        let h1 = (0.1 * x1 + 0.2 * x2).tanh();
        let h2 = (-0.3 * x1 + 0.4 * x2 + 0.1).tanh();
        let h3 = (0.5 * x1 - 0.6 * x2 - 0.2).tanh();
        let expected = h1 - h2 + 0.5 * h3 + 0.25;
        assert!((net.output(&[x1, x2]) - expected).abs() < 1e-15);
    }

    #[test]
    fn logistic_gradient_is_glm_score() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let net = Network::new(spec(&[2, 1], &[Activation::Sigmoid], NetLoss::Logistic), 1).unwrap();
        let xs: Vec<Vec<f64>> = (0..20).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
        let ys: Vec<f64> = (0..20).map(|i| f64::from(u8::from(i % 3 == 0))).collect();
        let g = net.gradient(&xs, &ys);
        let n = xs.len() as f64;
        for c in 0..3 {
            let score: f64 = xs
                .iter()
                .zip(&ys)
                .map(|(x, y)| {
                    let xc = if c < 2 { x[c] } else { 1.0 };
                    xc * (y - net.output(x))
                })
                .sum::<f64>()
                / n;
            assert!((g[0][(0, c)] + score).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_residual_gives_zero_gradient_and_zero_epochs_is_noop() {
        let mut net = Network::new(spec(&[1, 3, 1], &[Activation::Tanh, Activation::Identity], NetLoss::Squared), 2).unwrap();
        let xs = vec![vec![0.3], vec![-0.7]];
        let ys: Vec<f64> = xs.iter().map(|x| net.output(x)).collect();
        assert!(net.gradient(&xs, &ys).iter().all(|g| g.iter().all(|v| v.abs() < 1e-15)));
        let before = net.clone();
        let trace = net.train(&xs, &ys, 0, Schedule { gamma0: 0.1, decay: 0.0 }, 0).unwrap();
        assert_eq!(net, before);
        assert_eq!(trace.len(), 1);
    }

    #[test]
    fn divergence_is_reported() {
        let mut net = Network::new(spec(&[1, 1], &[Activation::Identity], NetLoss::Squared), 2).unwrap();
        let xs: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 * 10.0]).collect();
        let ys: Vec<f64> = (0..20).map(|i| i as f64).collect();
        assert!(matches!(net.train(&xs, &ys, 50, Schedule { gamma0: 10.0, decay: 0.0 }, 0), Err(Error::NonFinite(_))));
    }

    #[test]
    fn saturating_outputs_are_bounded() {
        let mut net = Network::new(spec(&[2, 4, 1], &[Activation::Tanh, Activation::Sigmoid], NetLoss::Logistic), 5).unwrap();
        for w in &mut net.weights {
            w.scale_mut(50.0);
        }
        for x in [[1e3, -1e3], [-5.0, 7.0], [0.0, 0.0]] {
            let pass = net.forward(&x);
            assert!(pass.outputs[1].iter().all(|v| (-1.0..=1.0).contains(v)));
            assert!((0.0..=1.0).contains(&pass.outputs[2][0]));
        }
    }
}
