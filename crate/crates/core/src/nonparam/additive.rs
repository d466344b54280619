use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataframe::DesignMatrix;
use crate::error::{Error, Result};
use crate::linalg::Qr;
use crate::model::{Learner, Predictor};
use crate::nonparam::kernel::{log_grid, select_bandwidth, Kernel, KernelSmoother};
use crate::nonparam::spline::{BSplineBasis, PSpline};

/// Univariate linear smoother used for one additive component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SmootherSpec {
    /// Nadaraya–Watson with a leave-one-out bandwidth, re-selected on the
    /// current partial residuals every few sweeps.
    Kernel {
        #[serde(default)]
        kernel: Kernel,
    },
    /// Cubic P-spline whose penalty gives `df` effective degrees of freedom
    /// (constant and slope included).
    PSpline {
        df: f64,
        #[serde(default = "default_segments")]
        segments: usize,
    },
    /// Least-squares line.
    Linear,
}

fn default_segments() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdditiveOptions {
    /// Backfitting stops when no fitted value moves by more than this.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Sweeps between bandwidth re-selections for kernel components.
    pub bandwidth_refresh: usize,
    pub grid_points: usize,
}

impl Default for AdditiveOptions {
    fn default() -> Self {
        Self { tol: 1e-6, max_sweeps: 50, bandwidth_refresh: 5, grid_points: 100 }
    }
}

/// Fitted univariate function, before centering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ComponentModel {
    Kernel { kernel: Kernel, bandwidth: f64, x: Vec<f64>, partial_residual: Vec<f64> },
    PSpline { basis: BSplineBasis, lambda: f64, coefficients: Vec<f64> },
    Linear { x_mean: f64, slope: f64 },
}

impl ComponentModel {
    fn raw(&self, x: f64) -> f64 {
        match self {
            ComponentModel::Kernel { kernel, bandwidth, x: xs, partial_residual } => {
                let sm = KernelSmoother::new(
                    *kernel,
                    vec![*bandwidth],
                    DMatrix::from_column_slice(xs.len(), 1, xs),
                    partial_residual.clone(),
                )
                .expect("stored smoother is valid");
                sm.predict_one(&[x]).unwrap_or(f64::NAN)
            }
            ComponentModel::PSpline { basis, coefficients, .. } => {
                basis.row(x).iter().zip(coefficients).map(|(a, b)| a * b).sum()
            }
            ComponentModel::Linear { x_mean, slope } => slope * (x - x_mean),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub name: String,
    pub column: usize,
    pub model: ComponentModel,
    /// Subtracted so the component averages zero over the training rows.
    pub shift: f64,
    /// Effective degrees of freedom of the smoother (trace), including the
    /// constant removed by centering.
    pub df: f64,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

impl Component {
    pub fn eval(&self, x: f64) -> f64 {
        self.model.raw(x) - self.shift
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdditiveFit {
    pub intercept: f64,
    pub components: Vec<Component>,
    /// `(column name, column index, coefficient)` of the linear terms.
    pub linear: Vec<(String, usize, f64)>,
    pub sweeps: usize,
    pub converged: bool,
    pub fitted: Vec<f64>,
    pub residuals: Vec<f64>,
}

/// Per-term smoothing operator during backfitting.
enum Operator {
    Kernel { kernel: Kernel, bandwidth: f64, weights: DMatrix<f64> },
    PSpline(PSpline),
    Linear { x_mean: f64, sxx: f64 },
}

fn kernel_weights(xs: &[f64], kernel: Kernel, h: f64) -> Result<DMatrix<f64>> {
    let sm = KernelSmoother::new(kernel, vec![h], DMatrix::from_column_slice(xs.len(), 1, xs), vec![0.0; xs.len()])?;
    let n = xs.len();
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        for (j, v) in sm.weights(&[xs[i]])?.into_iter().enumerate() {
            w[(i, j)] = v;
        }
    }
    Ok(w)
}

fn bandwidth_grid(xs: &[f64]) -> Vec<f64> {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt().max(1e-12);
    log_grid(0.02 * sd, 2.0 * sd, 25)
}

impl Operator {
    fn apply(&self, xs: &[f64], r: &[f64]) -> Vec<f64> {
        match self {
            Operator::Kernel { weights, .. } => {
                (weights * DVector::from_column_slice(r)).as_slice().to_vec()
            }
            Operator::PSpline(sp) => sp.smooth(r),
            Operator::Linear { x_mean, sxx } => {
                let sxy: f64 = xs.iter().zip(r).map(|(x, v)| (x - x_mean) * v).sum();
                let slope = if *sxx > 0.0 { sxy / sxx } else { 0.0 };
                xs.iter().map(|x| slope * (x - x_mean)).collect()
            }
        }
    }

    fn trace(&self) -> f64 {
        match self {
            Operator::Kernel { weights, .. } => weights.trace(),
            Operator::PSpline(sp) => sp.df,
            Operator::Linear { .. } => 2.0,
        }
    }

    fn model(&self, xs: &[f64], r: &[f64]) -> ComponentModel {
        match self {
            Operator::Kernel { kernel, bandwidth, .. } => ComponentModel::Kernel {
                kernel: *kernel,
                bandwidth: *bandwidth,
                x: xs.to_vec(),
                partial_residual: r.to_vec(),
            },
            Operator::PSpline(sp) => ComponentModel::PSpline {
                basis: sp.basis.clone(),
                lambda: sp.lambda,
                coefficients: sp.coefficients(r),
            },
            Operator::Linear { x_mean, sxx } => {
                let sxy: f64 = xs.iter().zip(r).map(|(x, v)| (x - x_mean) * v).sum();
                ComponentModel::Linear { x_mean: *x_mean, slope: if *sxx > 0.0 { sxy / sxx } else { 0.0 } }
            }
        }
    }
}

fn center(v: &mut [f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    for x in v.iter_mut() {
        *x -= m;
    }
    m
}

/// Additive model `y = α + Σ m_j(x_j) + Σ γ_k x_k` by backfitting: each sweep
/// smooths every term's partial residual in turn, recentres it to mean zero,
/// then refits the linear terms by least squares on what the smooth terms
/// leave over.
pub fn fit_additive(
    dm: &DesignMatrix,
    smooth: &[(String, SmootherSpec)],
    linear: &[String],
    opts: &AdditiveOptions,
) -> Result<AdditiveFit> {
    let n = dm.n_rows();
    let y = dm.y.as_slice();
    let smooth_cols: Vec<usize> =
        smooth.iter().map(|(name, _)| dm.column_index(name)).collect::<Result<_>>()?;
    let lin_cols: Vec<usize> = linear.iter().map(|name| dm.column_index(name)).collect::<Result<_>>()?;
    let xs: Vec<Vec<f64>> = smooth_cols.iter().map(|&c| dm.x.column(c).iter().copied().collect()).collect();

    let mut ops: Vec<Operator> = Vec::with_capacity(smooth.len());
    for ((_, spec), x) in smooth.iter().zip(&xs) {
        ops.push(match spec {
            SmootherSpec::Kernel { kernel } => {
                // placeholder bandwidth; selected on the first sweep
                let h = bandwidth_grid(x)[12];
                Operator::Kernel { kernel: *kernel, bandwidth: h, weights: kernel_weights(x, *kernel, h)? }
            }
            SmootherSpec::PSpline { df, segments } => Operator::PSpline(PSpline::with_df(x, *df, *segments)?),
            SmootherSpec::Linear => {
                let m = x.iter().sum::<f64>() / n as f64;
                Operator::Linear { x_mean: m, sxx: x.iter().map(|v| (v - m).powi(2)).sum() }
            }
        });
    }

    // centred linear block, factorized once
    let lin_means: Vec<f64> = lin_cols.iter().map(|&c| dm.x.column(c).mean()).collect();
    let xl = DMatrix::from_fn(n, lin_cols.len(), |i, k| dm.x[(i, lin_cols[k])] - lin_means[k]);
    let lin_qr = if lin_cols.is_empty() { None } else { Some(Qr::new(&xl, linear)?) };

    let ybar = y.iter().sum::<f64>() / n as f64;
    let mut alpha = ybar;
    let mut f: Vec<Vec<f64>> = vec![vec![0.0; n]; smooth.len()];
    let mut gamma = vec![0.0; lin_cols.len()];
    let mut lin_fit = vec![0.0; n];
    let mut converged = false;
    let mut sweeps = 0;

    let partial = |f: &[Vec<f64>], lin_fit: &[f64], alpha: f64, skip: Option<usize>| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let others: f64 =
                    f.iter().enumerate().filter(|(j, _)| Some(*j) != skip).map(|(_, fj)| fj[i]).sum();
                y[i] - alpha - others - lin_fit[i]
            })
            .collect()
    };

    while sweeps < opts.max_sweeps {
        let mut max_change: f64 = 0.0;
        for j in 0..smooth.len() {
            let r = partial(&f, &lin_fit, alpha, Some(j));
            if let Operator::Kernel { kernel, bandwidth, weights } = &mut ops[j] {
                if sweeps % opts.bandwidth_refresh.max(1) == 0 {
                    let x1 = DMatrix::from_column_slice(n, 1, &xs[j]);
                    let h = select_bandwidth(&x1, &r, *kernel, &bandwidth_grid(&xs[j]))?.bandwidth;
                    if h != *bandwidth {
                        *bandwidth = h;
                        *weights = kernel_weights(&xs[j], *kernel, h)?;
                    }
                }
            }
            let mut new = ops[j].apply(&xs[j], &r);
            center(&mut new);
            for (a, b) in new.iter().zip(&f[j]) {
                max_change = max_change.max((a - b).abs());
            }
            f[j] = new;
        }
        let r = partial(&f, &vec![0.0; n], 0.0, None);
        let rbar = r.iter().sum::<f64>() / n as f64;
        if let Some(qr) = &lin_qr {
            let rc = DVector::from_iterator(n, r.iter().map(|v| v - rbar));
            gamma = qr.solve(&rc).as_slice().to_vec();
            let new_lin: Vec<f64> = (&xl * DVector::from_column_slice(&gamma)).as_slice().to_vec();
            for (a, b) in new_lin.iter().zip(&lin_fit) {
                max_change = max_change.max((a - b).abs());
            }
            lin_fit = new_lin;
        }
        // xl is centred, so the linear block has mean zero too
        alpha = rbar;
        sweeps += 1;
        if max_change < opts.tol {
            converged = true;
            break;
        }
    }

    let mut components = Vec::with_capacity(smooth.len());
    for (j, (name, _)) in smooth.iter().enumerate() {
        let r = partial(&f, &lin_fit, alpha, Some(j));
        let model = ops[j].model(&xs[j], &r);
        let shift = xs[j].iter().map(|&x| model.raw(x)).sum::<f64>() / n as f64;
        let lo = xs[j].iter().copied().fold(f64::INFINITY, f64::min);
        let hi = xs[j].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let g = opts.grid_points.max(2);
        let grid: Vec<f64> = (0..g).map(|k| lo + (hi - lo) * k as f64 / (g - 1) as f64).collect();
        let values = grid.iter().map(|&x| model.raw(x) - shift).collect();
        components.push(Component {
            name: name.clone(),
            column: smooth_cols[j],
            model,
            shift,
            df: ops[j].trace(),
            grid,
            values,
        });
    }
    // express the linear part on uncentred columns
    let intercept = alpha - gamma.iter().zip(&lin_means).map(|(g, m)| g * m).sum::<f64>();
    let linear_terms: Vec<(String, usize, f64)> = linear
        .iter()
        .zip(&lin_cols)
        .zip(&gamma)
        .map(|((name, &c), &g)| (name.clone(), c, g))
        .collect();
    let fitted: Vec<f64> = (0..n)
        .map(|i| alpha + f.iter().map(|fj| fj[i]).sum::<f64>() + lin_fit[i])
        .collect();
    let residuals = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    Ok(AdditiveFit { intercept, components, linear: linear_terms, sweeps, converged, fitted, residuals })
}

impl AdditiveFit {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.intercept
            + self.components.iter().map(|c| c.eval(row[c.column])).sum::<f64>()
            + self.linear.iter().map(|(_, c, g)| g * row[*c]).sum::<f64>()
    }

    /// Writes `term,x,value` rows for every component grid.
    pub fn write_components_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "term,x,value")?;
        for c in &self.components {
            for (x, v) in c.grid.iter().zip(&c.values) {
                writeln!(w, "{},{},{}", c.name, x, v)?;
            }
        }
        Ok(())
    }
}

impl Predictor for AdditiveFit {
    fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        (0..x.nrows())
            .map(|i| {
                let row: Vec<f64> = x.row(i).iter().copied().collect();
                self.predict_row(&row)
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct AdditiveLearner {
    pub smooth: Vec<(String, SmootherSpec)>,
    pub linear: Vec<String>,
    pub options: AdditiveOptions,
}

impl Learner for AdditiveLearner {
    fn label(&self) -> String {
        "additive".into()
    }

    fn fit(&self, dm: &DesignMatrix) -> Result<Box<dyn Predictor>> {
        let fit = fit_additive(dm, &self.smooth, &self.linear, &self.options)?;
        if fit.components.iter().any(|c| c.values.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite(0));
        }
        Ok(Box::new(fit))
    }
}
