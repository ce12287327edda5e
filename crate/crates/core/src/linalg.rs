//! Dense solves for the small normal-equation systems used by both estimators.

use nalgebra::{DMatrix, DVector, SVD};

use crate::error::{ReserveError, Result};

/// Singular values below this fraction of the largest one count as zero.
pub const RANK_TOLERANCE: f64 = 1e-12;

/// Inverse of a square matrix through its SVD, refusing rank-deficient input.
#[derive(Debug, Clone)]
pub struct RankRevealingInverse {
    inverse: DMatrix<f64>,
}

impl RankRevealingInverse {
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        let dim = a.nrows();
        if a.ncols() != dim {
            return Err(ReserveError::DimensionMismatch(format!(
                "expected a square matrix, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        let svd = SVD::new(a.clone(), true, true);
        let largest = svd.singular_values.max();
        let cutoff = RANK_TOLERANCE * largest;
        let rank = svd.singular_values.iter().filter(|&&s| s > cutoff).count();
        if largest <= 0.0 || !largest.is_finite() || rank < dim {
            return Err(ReserveError::Singular { rank, dim });
        }
        let u = svd.u.as_ref().expect("u requested");
        let v_t = svd.v_t.as_ref().expect("v_t requested");
        let inv_sigma = DMatrix::from_diagonal(&svd.singular_values.map(|s| 1.0 / s));
        Ok(Self {
            inverse: v_t.transpose() * inv_sigma * u.transpose(),
        })
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        &self.inverse * b
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }
}

/// `X^T diag(w) X`.
pub fn weighted_gram(x: &DMatrix<f64>, w: &DVector<f64>) -> DMatrix<f64> {
    let mut wx = x.clone();
    for (mut row, &wi) in wx.row_iter_mut().zip(w.iter()) {
        row *= wi;
    }
    x.transpose() * wx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverts_well_conditioned() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let inv = RankRevealingInverse::new(&a).unwrap();
        let id = &a * inv.inverse();
        assert!((id - DMatrix::identity(2, 2)).abs().max() < 1e-14);
        let x = inv.solve(&DVector::from_vec(vec![1.0, 2.0]));
        assert!((&a * x - DVector::from_vec(vec![1.0, 2.0])).abs().max() < 1e-14);
    }

    #[test]
    fn rejects_rank_deficient() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(
            RankRevealingInverse::new(&a),
            Err(ReserveError::Singular { rank: 1, dim: 2 })
        ));
        assert!(RankRevealingInverse::new(&DMatrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn weighted_gram_matches_explicit_product() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0]);
        let w = DVector::from_vec(vec![2.0, 3.0, 5.0]);
        let expected = x.transpose() * DMatrix::from_diagonal(&w) * &x;
        assert!((weighted_gram(&x, &w) - expected).abs().max() < 1e-14);
    }
}
