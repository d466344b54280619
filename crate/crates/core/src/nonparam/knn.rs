use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dataframe::{DesignMatrix, Standardization};
use crate::error::{Error, Result};
use crate::model::{Learner, Predictor};
use crate::nonparam::Smoother;

/// k-nearest-neighbour regression in Euclidean distance on predictors
/// standardized with the training moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Knn {
    pub k: usize,
    pub columns: Vec<usize>,
    pub standardization: Standardization,
    /// Standardized training inputs.
    pub z: DMatrix<f64>,
    pub y: Vec<f64>,
}

impl Knn {
    pub fn fit(dm: &DesignMatrix, k: usize) -> Result<Self> {
        let n = dm.n_rows();
        if k == 0 || k > n {
            return Err(Error::InvalidArgument(format!("k must lie in 1..={n}, got {k}")));
        }
        let columns = dm.predictor_columns();
        let x = dm.x.select_columns(&columns);
        let standardization = Standardization::fit(&x, true);
        let z = standardization.apply(&x);
        Ok(Self { k, columns, standardization, z, y: dm.y.as_slice().to_vec() })
    }

    /// Training rows of the `k` nearest neighbours of a raw query, closest
    /// first, distance ties going to the lower row index.
    pub fn neighbors(&self, query: &[f64]) -> Vec<usize> {
        let q: Vec<f64> = query
            .iter()
            .enumerate()
            .map(|(j, v)| (v - self.standardization.means[j]) / self.standardization.scales[j])
            .collect();
        let mut d: Vec<(f64, usize)> = self
            .z
            .row_iter()
            .enumerate()
            .map(|(i, row)| (row.iter().zip(&q).map(|(a, b)| (a - b).powi(2)).sum(), i))
            .collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        d.truncate(self.k);
        d.into_iter().map(|(_, i)| i).collect()
    }

    pub fn predict_one(&self, query: &[f64]) -> f64 {
        self.neighbors(query).iter().map(|&i| self.y[i]).sum::<f64>() / self.k as f64
    }
}

/// Mean response of the `k` training rows nearest to `query` (raw scale).
pub fn knn_predict(training: &DesignMatrix, k: usize, query: &[f64]) -> Result<f64> {
    Ok(Knn::fit(training, k)?.predict_one(query))
}

impl Smoother for Knn {
    fn smoother_diagonal(&self) -> Result<Vec<f64>> {
        let raw = self.standardization.invert(&self.z);
        Ok((0..self.y.len())
            .map(|i| {
                let q: Vec<f64> = raw.row(i).iter().copied().collect();
                if self.neighbors(&q).contains(&i) {
                    1.0 / self.k as f64
                } else {
                    0.0
                }
            })
            .collect())
    }
}

impl Predictor for Knn {
    fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        (0..x.nrows())
            .map(|i| {
                let q: Vec<f64> = self.columns.iter().map(|&j| x[(i, j)]).collect();
                self.predict_one(&q)
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct KnnLearner {
    pub k: usize,
}

impl Learner for KnnLearner {
    fn label(&self) -> String {
        format!("knn(k={})", self.k)
    }

    fn fit(&self, dm: &DesignMatrix) -> Result<Box<dyn Predictor>> {
        Ok(Box::new(Knn::fit(dm, self.k)?))
    }
}
