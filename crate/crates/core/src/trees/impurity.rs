use serde::{Deserialize, Serialize};

/// Node criterion. Classification criteria expect a 0/1 response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Impurity {
    /// `n·p(1 − p)`.
    Gini,
    /// `−n·[p log p + (1 − p) log(1 − p)]`.
    Entropy,
    /// `Σ (yᵢ − ȳ)²`.
    Variance,
}

impl Impurity {
    pub fn is_classification(self) -> bool {
        !matches!(self, Impurity::Variance)
    }

    /// Impurity from node sufficient statistics: row count, `Σy` and `Σy²`.
    /// For the variance criterion the response should be centred near the
    /// node mean to limit cancellation.
    pub fn from_stats(self, n: f64, sum: f64, sumsq: f64) -> f64 {
        if n <= 0.0 {
            return 0.0;
        }
        match self {
            Impurity::Gini => sum * (n - sum) / n,
            Impurity::Entropy => {
                let term = |k: f64| if k <= 0.0 { 0.0 } else { -k * (k / n).ln() };
                term(sum) + term(n - sum)
            }
            Impurity::Variance => (sumsq - sum * sum / n).max(0.0),
        }
    }
}

/// Impurity of a set of responses.
pub fn impurity(values: &[f64], kind: Impurity) -> f64 {
    let n = values.len() as f64;
    if values.is_empty() {
        return 0.0;
    }
    match kind {
        Impurity::Variance => {
            let m = values.iter().sum::<f64>() / n;
            values.iter().map(|v| (v - m).powi(2)).sum()
        }
        _ => kind.from_stats(n, values.iter().sum(), 0.0),
    }
}
