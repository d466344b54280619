use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dummy columns produced for one categorical term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedFactor {
    /// Term label, e.g. `checking_status` or `cut(age,0,25,Inf)`.
    pub source: String,
    /// All levels in order; under reference coding the first one has no column.
    pub levels: Vec<String>,
    pub reference: Option<String>,
    /// Design column index for each non-reference level, in level order.
    pub columns: Vec<usize>,
}

/// Per-column centering and scaling applied to a design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl Standardization {
    /// Population (1/n) moments of each column. Centering is skipped when
    /// `center` is false, in which case the scale is the root mean square.
    /// Constant columns keep scale 1.
    pub fn fit(x: &DMatrix<f64>, center: bool) -> Self {
        let n = x.nrows() as f64;
        let mut means = Vec::with_capacity(x.ncols());
        let mut scales = Vec::with_capacity(x.ncols());
        for col in x.column_iter() {
            let mean = if center { col.sum() / n } else { 0.0 };
            let ss: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum();
            let sd = (ss / n).sqrt();
            means.push(mean);
            scales.push(if sd > 1e-12 * (1.0 + mean.abs()) { sd } else { 1.0 });
        }
        Self { means, scales }
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = x.clone();
        for (j, mut col) in z.column_iter_mut().enumerate() {
            for v in col.iter_mut() {
                *v = (*v - self.means[j]) / self.scales[j];
            }
        }
        z
    }

    pub fn invert(&self, z: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = z.clone();
        for (j, mut col) in x.column_iter_mut().enumerate() {
            for v in col.iter_mut() {
                *v = *v * self.scales[j] + self.means[j];
            }
        }
        x
    }
}

/// Numeric design: `n × p` matrix, response, and the record of how it was
/// encoded. Binary responses are stored as 0/1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMatrix {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub column_names: Vec<String>,
    pub response_name: String,
    /// When set, column 0 is the constant 1.
    pub has_intercept: bool,
    pub encoding_map: Vec<EncodedFactor>,
    pub standardization: Option<Standardization>,
}

impl DesignMatrix {
    /// Builds a design from raw parts, prepending a constant column when
    /// `intercept` is set.
    pub fn from_parts(
        x: DMatrix<f64>,
        y: DVector<f64>,
        names: Vec<String>,
        intercept: bool,
    ) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::InvalidArgument(format!(
                "design has {} rows but response has {}",
                x.nrows(),
                y.len()
            )));
        }
        if names.len() != x.ncols() {
            return Err(Error::InvalidArgument("column name count mismatch".into()));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("design contains non-finite values".into()));
        }
        let (x, column_names) = if intercept {
            let x = x.insert_column(0, 1.0);
            let mut n = vec!["(Intercept)".to_string()];
            n.extend(names);
            (x, n)
        } else {
            (x, names)
        };
        Ok(Self {
            x,
            y,
            column_names,
            response_name: "y".into(),
            has_intercept: intercept,
            encoding_map: Vec::new(),
            standardization: None,
        })
    }

    /// Convenience constructor from row-major data with generated names `x1..xp`.
    pub fn from_rows(rows: &[Vec<f64>], y: &[f64], intercept: bool) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        let x = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
        let names = (1..=p).map(|j| format!("x{j}")).collect();
        Self::from_parts(x, DVector::from_column_slice(y), names, intercept)
    }

    pub fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.x.ncols()
    }

    /// Indices of the non-intercept columns.
    pub fn predictor_columns(&self) -> Vec<usize> {
        let start = usize::from(self.has_intercept);
        (start..self.n_cols()).collect()
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.column_names
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    /// True when every response value is 0 or 1.
    pub fn is_binary(&self) -> bool {
        self.y.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    /// The ±1 view of a 0/1 response.
    pub fn signed_y(&self) -> Vec<f64> {
        self.y.iter().map(|&v| if v > 0.5 { 1.0 } else { -1.0 }).collect()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.x.row(i).iter().copied().collect()
    }

    pub fn subset_rows(&self, rows: &[usize]) -> DesignMatrix {
        let x = self.x.select_rows(rows);
        let y = DVector::from_iterator(rows.len(), rows.iter().map(|&i| self.y[i]));
        DesignMatrix { x, y, standardization: None, ..self.clone_meta() }
    }

    /// Keeps only `cols` (indices into the current columns). The intercept
    /// flag survives only if column 0 is kept first.
    pub fn select_columns(&self, cols: &[usize]) -> DesignMatrix {
        let x = self.x.select_columns(cols);
        let column_names = cols.iter().map(|&j| self.column_names[j].clone()).collect();
        let has_intercept = self.has_intercept && cols.first() == Some(&0);
        let encoding_map = self
            .encoding_map
            .iter()
            .filter_map(|f| {
                let columns: Option<Vec<usize>> = f
                    .columns
                    .iter()
                    .map(|c| cols.iter().position(|k| k == c))
                    .collect();
                columns.map(|columns| EncodedFactor { columns, ..f.clone() })
            })
            .collect();
        DesignMatrix {
            x,
            y: self.y.clone(),
            column_names,
            response_name: self.response_name.clone(),
            has_intercept,
            encoding_map,
            standardization: None,
        }
    }

    /// Design with the response replaced.
    pub fn with_response(&self, y: DVector<f64>) -> DesignMatrix {
        DesignMatrix { y, ..self.clone() }
    }

    /// Standardizes non-intercept columns (centered when an intercept is
    /// present) and records the transformation.
    pub fn standardized(&self) -> DesignMatrix {
        let cols = self.predictor_columns();
        let sub = self.x.select_columns(&cols);
        let st = Standardization::fit(&sub, self.has_intercept);
        let z = st.apply(&sub);
        let mut x = self.x.clone();
        for (k, &j) in cols.iter().enumerate() {
            x.set_column(j, &z.column(k));
        }
        DesignMatrix { x, standardization: Some(st), ..self.clone() }
    }

    /// Recovers the level of a categorical term on every row.
    pub fn decode_factor(&self, source: &str) -> Result<Vec<String>> {
        let f = self
            .encoding_map
            .iter()
            .find(|f| f.source == source)
            .ok_or_else(|| Error::UnknownColumn(source.to_string()))?;
        let offset = usize::from(f.reference.is_some());
        (0..self.n_rows())
            .map(|i| {
                let hit = f.columns.iter().position(|&c| self.x[(i, c)] == 1.0);
                match (hit, &f.reference) {
                    (Some(k), _) => Ok(f.levels[k + offset].clone()),
                    (None, Some(r)) => Ok(r.clone()),
                    (None, None) => Err(Error::InvalidArgument(format!(
                        "row {i} has no active dummy for `{source}`"
                    ))),
                }
            })
            .collect()
    }

    fn clone_meta(&self) -> DesignMatrix {
        DesignMatrix {
            x: DMatrix::zeros(0, 0),
            y: DVector::zeros(0),
            column_names: self.column_names.clone(),
            response_name: self.response_name.clone(),
            has_intercept: self.has_intercept,
            encoding_map: self.encoding_map.clone(),
            standardization: self.standardization.clone(),
        }
    }
}
