//! Orthogonal-factorization helpers shared by the parametric fits.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Thin QR factorization `X = QR` of a full-column-rank matrix.
#[derive(Debug, Clone)]
pub struct Qr {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

/// Relative size of `|r_jj|` against the column norm below which column `j`
/// is deemed a linear combination of the columns before it.
const RANK_TOL: f64 = 1e-9;

impl Qr {
    /// Factorizes `x`, naming the first column that depends linearly on the
    /// preceding ones when `x` is rank deficient.
    pub fn new(x: &DMatrix<f64>, names: &[String]) -> Result<Self> {
        let (n, p) = x.shape();
        if n < p {
            return Err(Error::InvalidArgument(format!("{p} columns but only {n} rows")));
        }
        let qr = x.clone().qr();
        let r = qr.r();
        for j in 0..p {
            let norm = x.column(j).norm();
            if norm == 0.0 || r[(j, j)].abs() <= RANK_TOL * norm {
                let column = names.get(j).cloned().unwrap_or_else(|| format!("column {j}"));
                return Err(Error::RankDeficient { column });
            }
        }
        Ok(Self { q: qr.q(), r })
    }

    /// Least-squares coefficients `argmin ‖y − Xb‖`.
    pub fn solve(&self, y: &DVector<f64>) -> DVector<f64> {
        let qty = self.q.tr_mul(y);
        self.r
            .solve_upper_triangular(&qty)
            .expect("R has a non-zero diagonal after the rank check")
    }

    /// `R⁻¹` by back-substitution.
    pub fn r_inverse(&self) -> DMatrix<f64> {
        let p = self.r.ncols();
        self.r
            .solve_upper_triangular(&DMatrix::identity(p, p))
            .expect("R has a non-zero diagonal after the rank check")
    }

    /// `(XᵀX)⁻¹ = R⁻¹R⁻ᵀ`.
    pub fn xtx_inverse(&self) -> DMatrix<f64> {
        let ri = self.r_inverse();
        &ri * ri.transpose()
    }

    /// Diagonal of the hat matrix `QQᵀ`.
    pub fn leverages(&self) -> Vec<f64> {
        self.q.row_iter().map(|row| row.norm_squared()).collect()
    }
}

/// Columns kept by a left-to-right scan that drops every column lying in
/// the span of the columns kept before it (same tolerance as [`Qr::new`]).
pub fn independent_columns(x: &DMatrix<f64>) -> Vec<usize> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut kept = Vec::new();
    for j in 0..x.ncols() {
        let col = x.column(j).into_owned();
        let norm = col.norm();
        if norm == 0.0 {
            continue;
        }
        let mut r = col;
        // two Gram–Schmidt passes keep the residual accurate
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&r);
                r.axpy(-c, q, 1.0);
            }
        }
        let rn = r.norm();
        if rn > RANK_TOL * norm {
            basis.push(r / rn);
            kept.push(j);
        }
    }
    kept
}

/// Weighted least squares `argmin Σ wᵢ(yᵢ − xᵢᵀb)²` via QR of `√W X`.
pub fn weighted_lstsq(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    w: &[f64],
    names: &[String],
) -> Result<(DVector<f64>, Qr)> {
    let sw: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
    let mut xw = x.clone();
    for (i, mut row) in xw.row_iter_mut().enumerate() {
        row *= sw[i];
    }
    let yw = DVector::from_iterator(y.len(), y.iter().zip(&sw).map(|(a, b)| a * b));
    let qr = Qr::new(&xw, names)?;
    Ok((qr.solve(&yw), qr))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(p: usize) -> Vec<String> {
        (0..p).map(|j| format!("c{j}")).collect()
    }

    #[test]
    fn names_dependent_column() {
        let x = DMatrix::from_row_slice(4, 3, &[
            1.0, 2.0, 3.0, //
            1.0, 0.0, 1.0, //
            1.0, 5.0, 6.0, //
            1.0, 1.0, 2.0,
        ]);
        match Qr::new(&x, &names(3)) {
            Err(Error::RankDeficient { column }) => assert_eq!(column, "c2"),
            other => panic!("expected rank error, got {other:?}"),
        }
    }

    #[test]
    fn inverse_and_leverages() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.5, 1.0, -1.0, 1.0, 2.0, 1.0, 3.0]);
        let qr = Qr::new(&x, &names(2)).unwrap();
        let direct = (x.transpose() * &x).try_inverse().unwrap();
        assert!((qr.xtx_inverse() - direct).abs().max() < 1e-12);
        let trace: f64 = qr.leverages().iter().sum();
        assert!((trace - 2.0).abs() < 1e-12);
    }

    #[test]
    fn weights_of_one_give_ordinary_fit() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0]);
        let y = DVector::from_vec(vec![1.0, 3.0, 5.0]);
        let (b, _) = weighted_lstsq(&x, &y, &[1.0; 3], &names(2)).unwrap();
        assert!((b[0] - 1.0).abs() < 1e-12 && (b[1] - 2.0).abs() < 1e-12);
    }
}
