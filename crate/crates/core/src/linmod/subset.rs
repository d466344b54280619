use serde::{Deserialize, Serialize};

use crate::dataframe::DesignMatrix;
use crate::error::{Error, Result};
use crate::linalg::Qr;

pub const MAX_SUBSET_PREDICTORS: usize = 15;

/// Lowest-RSS column set of one support size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetChoice {
    pub size: usize,
    /// Design-column indices, intercept included when present.
    pub columns: Vec<usize>,
    pub rss: f64,
}

/// Residual sum of squares of the least-squares fit on `cols`, or `None`
/// when those columns are linearly dependent.
pub fn subset_rss(dm: &DesignMatrix, cols: &[usize]) -> Option<f64> {
    if cols.is_empty() {
        return Some(dm.y.norm_squared());
    }
    let x = dm.x.select_columns(cols);
    let names: Vec<String> = cols.iter().map(|&j| dm.column_names[j].clone()).collect();
    let qr = Qr::new(&x, &names).ok()?;
    let beta = qr.solve(&dm.y);
    Some((&dm.y - &x * beta).norm_squared())
}

/// Exhaustive search over predictor subsets of every size `0..=p` (the
/// intercept is always kept). Rank-deficient subsets are skipped; ties keep
/// the lexicographically first subset.
pub fn best_subset(dm: &DesignMatrix) -> Result<Vec<SubsetChoice>> {
    let preds = dm.predictor_columns();
    let p = preds.len();
    if p > MAX_SUBSET_PREDICTORS {
        return Err(Error::TooManyColumns { p, max: MAX_SUBSET_PREDICTORS });
    }
    let base: Vec<usize> = if dm.has_intercept { vec![0] } else { Vec::new() };
    let mut best: Vec<Option<SubsetChoice>> = vec![None; p + 1];
    for mask in 0u32..(1u32 << p) {
        let size = mask.count_ones() as usize;
        let mut cols = base.clone();
        cols.extend((0..p).filter(|&k| mask & (1 << k) != 0).map(|k| preds[k]));
        let Some(rss) = subset_rss(dm, &cols) else { continue };
        let better = match &best[size] {
            None => true,
            Some(b) => rss < b.rss || (rss == b.rss && cols < b.columns),
        };
        if better {
            best[size] = Some(SubsetChoice { size, columns: cols, rss });
        }
    }
    Ok(best.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linmod::fit_ols;

    #[test]
    fn recovers_true_support() {
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|i| (0..6).map(|j| (((i * (j + 3) * 7919) % 101) as f64) / 10.0).collect())
            .collect();
        let y: Vec<f64> = rows.iter().map(|r| 2.0 * r[1] - 3.0 * r[4] + 1.0).collect();
        let dm = DesignMatrix::from_rows(&rows, &y, true).unwrap();
        let best = best_subset(&dm).unwrap();
        let two = best.iter().find(|c| c.size == 2).unwrap();
        assert_eq!(two.columns, vec![0, 2, 5]);
        assert!(two.rss < 1e-10);
        let full = best.iter().find(|c| c.size == 6).unwrap();
        assert!((full.rss - fit_ols(&dm).unwrap().rss).abs() < 1e-9);
    }

    #[test]
    fn refuses_wide_designs() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| (0..16).map(|j| (i * j) as f64).collect()).collect();
        let dm = DesignMatrix::from_rows(&rows, &[0.0; 20], false).unwrap();
        assert!(matches!(best_subset(&dm), Err(Error::TooManyColumns { .. })));
    }
}
