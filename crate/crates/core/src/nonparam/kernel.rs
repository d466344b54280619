use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dataframe::DesignMatrix;
use crate::error::{Error, Result};
use crate::model::{Learner, Predictor};
use crate::nonparam::Smoother;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    #[default]
    Gaussian,
    Epanechnikov,
}

impl Kernel {
    /// `log K(u)` for the squared scaled distance `u²`, up to a constant;
    /// `-inf` outside the support.
    fn log_weight(self, u2: f64) -> f64 {
        match self {
            Kernel::Gaussian => -0.5 * u2,
            Kernel::Epanechnikov => {
                if u2 < 1.0 {
                    (1.0 - u2).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }
}

/// Nadaraya–Watson local-constant regression with a product kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSmoother {
    pub kernel: Kernel,
    /// One bandwidth per input dimension.
    pub bandwidth: Vec<f64>,
    /// Training inputs, one row per observation.
    pub x: DMatrix<f64>,
    pub y: Vec<f64>,
    /// Design columns the inputs were taken from, when built from a design.
    pub columns: Vec<usize>,
}

impl KernelSmoother {
    /// `bandwidth` may hold a single value shared by every dimension.
    pub fn new(kernel: Kernel, bandwidth: Vec<f64>, x: DMatrix<f64>, y: Vec<f64>) -> Result<Self> {
        let d = x.ncols();
        let bandwidth = if bandwidth.len() == 1 { vec![bandwidth[0]; d] } else { bandwidth };
        if bandwidth.len() != d || bandwidth.iter().any(|h| !(*h > 0.0)) {
            return Err(Error::InvalidArgument("bandwidths must be positive, one per input".into()));
        }
        if x.nrows() != y.len() || y.is_empty() {
            return Err(Error::InvalidArgument("inputs and response differ in length".into()));
        }
        let columns = (0..d).collect();
        Ok(Self { kernel, bandwidth, x, y, columns })
    }

    /// Smoother on the non-intercept columns of a design.
    pub fn from_design(dm: &DesignMatrix, kernel: Kernel, bandwidth: Vec<f64>) -> Result<Self> {
        let cols = dm.predictor_columns();
        let mut sm = Self::new(kernel, bandwidth, dm.x.select_columns(&cols), dm.y.as_slice().to_vec())?;
        sm.columns = cols;
        Ok(sm)
    }

    /// Normalized weights `s_{x,i}` at a query point.
    pub fn weights(&self, query: &[f64]) -> Result<Vec<f64>> {
        let logw: Vec<f64> = self
            .x
            .row_iter()
            .map(|row| {
                let u2: f64 = row
                    .iter()
                    .zip(query)
                    .zip(&self.bandwidth)
                    .map(|((xi, q), h)| ((xi - q) / h).powi(2))
                    .sum();
                match self.kernel {
                    Kernel::Gaussian => self.kernel.log_weight(u2),
                    // product of one-dimensional Epanechnikov kernels
                    Kernel::Epanechnikov => row
                        .iter()
                        .zip(query)
                        .zip(&self.bandwidth)
                        .map(|((xi, q), h)| self.kernel.log_weight(((xi - q) / h).powi(2)))
                        .sum(),
                }
            })
            .collect();
        let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(Error::EmptyNeighborhood);
        }
        let w: Vec<f64> = logw.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = w.iter().sum();
        Ok(w.into_iter().map(|v| v / total).collect())
    }

    pub fn predict_one(&self, query: &[f64]) -> Result<f64> {
        Ok(self.weights(query)?.iter().zip(&self.y).map(|(w, y)| w * y).sum())
    }

    /// Fitted values at the training inputs.
    pub fn fitted(&self) -> Result<Vec<f64>> {
        (0..self.y.len()).map(|i| self.predict_one(&self.row(i))).collect()
    }

    fn row(&self, i: usize) -> Vec<f64> {
        self.x.row(i).iter().copied().collect()
    }

    /// Leave-one-out squared risk through `(yᵢ − ŷᵢ)/(1 − s_ii)`.
    pub fn loocv_risk(&self) -> Result<f64> {
        let mut total = 0.0;
        for i in 0..self.y.len() {
            let w = self.weights(&self.row(i))?;
            let fit: f64 = w.iter().zip(&self.y).map(|(a, b)| a * b).sum();
            let denom = 1.0 - w[i];
            if denom <= 1e-12 {
                return Ok(f64::INFINITY);
            }
            total += ((self.y[i] - fit) / denom).powi(2);
        }
        Ok(total / self.y.len() as f64)
    }
}

impl Smoother for KernelSmoother {
    fn smoother_diagonal(&self) -> Result<Vec<f64>> {
        (0..self.y.len()).map(|i| Ok(self.weights(&self.row(i))?[i])).collect()
    }
}

impl Predictor for KernelSmoother {
    /// Rows are design rows; empty compact-kernel neighbourhoods give NaN.
    fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        (0..x.nrows())
            .map(|i| {
                let q: Vec<f64> = self.columns.iter().map(|&j| x[(i, j)]).collect();
                self.predict_one(&q).unwrap_or(f64::NAN)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthSelection {
    pub bandwidth: f64,
    pub grid: Vec<f64>,
    /// Leave-one-out risk at each grid value (infinite when undefined).
    pub risks: Vec<f64>,
}

/// Picks the bandwidth (shared across dimensions) with the lowest
/// leave-one-out squared risk.
pub fn select_bandwidth(
    x: &DMatrix<f64>,
    y: &[f64],
    kernel: Kernel,
    grid: &[f64],
) -> Result<BandwidthSelection> {
    if grid.is_empty() || grid.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
        return Err(Error::InvalidArgument("bandwidth grid must hold positive values".into()));
    }
    let risks: Vec<f64> = grid
        .iter()
        .map(|&h| {
            let sm = KernelSmoother::new(kernel, vec![h], x.clone(), y.to_vec())?;
            Ok(match sm.loocv_risk() {
                Ok(r) if r.is_finite() => r,
                Ok(_) | Err(Error::EmptyNeighborhood) => f64::INFINITY,
                Err(e) => return Err(e),
            })
        })
        .collect::<Result<_>>()?;
    let best = (0..grid.len())
        .filter(|&k| risks[k].is_finite())
        .min_by(|&a, &b| risks[a].total_cmp(&risks[b]))
        .ok_or_else(|| Error::InvalidArgument("no bandwidth in the grid gives a finite risk".into()))?;
    Ok(BandwidthSelection { bandwidth: grid[best], grid: grid.to_vec(), risks })
}

/// Log-spaced grid between `lo` and `hi`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let step = (hi / lo).ln() / (n - 1) as f64;
    (0..n).map(|k| lo * (step * k as f64).exp()).collect()
}

/// Kernel regression whose bandwidth is chosen by leave-one-out CV on each
/// training set.
#[derive(Debug, Clone)]
pub struct KernelLearner {
    pub kernel: Kernel,
    pub grid: Vec<f64>,
}

impl Learner for KernelLearner {
    fn label(&self) -> String {
        format!("kernel({:?})", self.kernel).to_lowercase()
    }

    fn fit(&self, dm: &DesignMatrix) -> Result<Box<dyn Predictor>> {
        let cols = dm.predictor_columns();
        let x = dm.x.select_columns(&cols);
        let sel = select_bandwidth(&x, dm.y.as_slice(), self.kernel, &self.grid)?;
        Ok(Box::new(KernelSmoother::from_design(dm, self.kernel, vec![sel.bandwidth])?))
    }
}
