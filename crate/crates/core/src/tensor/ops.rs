//! Loss-style primitives shared by the eager path and the tape.

use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Probability clamp for binary cross-entropy.
pub const BCE_EPS: f64 = 1e-7;

/// Floor for `ln q` in the categorical cross-entropy.
pub const CE_FLOOR: f64 = 1e-12;

/// Mean elementwise binary cross-entropy of predictions `p` against targets `t`.
pub fn elementwise_bce(p: &Matrix, t: &Matrix) -> Result<f64> {
    if p.shape() != t.shape() {
        return Err(Error::shape("elementwise_bce", p.shape(), t.shape()));
    }
    if p.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = p
        .data()
        .iter()
        .zip(t.data())
        .map(|(&p, &t)| {
            let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
            -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
        })
        .sum();
    Ok(total / p.len() as f64)
}

/// `-(1/n) Σ_i Σ_j p_ij ln q_ij` with `q` floored at [`CE_FLOOR`].
pub fn categorical_ce(q: &Matrix, p: &Matrix) -> Result<f64> {
    if p.shape() != q.shape() {
        return Err(Error::shape("categorical_ce", q.shape(), p.shape()));
    }
    if q.rows() == 0 {
        return Ok(0.0);
    }
    let total: f64 = q
        .data()
        .iter()
        .zip(p.data())
        .map(|(&q, &p)| -p * q.max(CE_FLOOR).ln())
        .sum();
    Ok(total / q.rows() as f64)
}

/// Squared distances `‖z_i − μ_j‖²` (n×k).
pub fn squared_distances(z: &Matrix, centers: &Matrix) -> Result<Matrix> {
    if z.cols() != centers.cols() {
        return Err(Error::shape("squared_distances", z.shape(), centers.shape()));
    }
    Ok(Matrix::from_fn(z.rows(), centers.rows(), |i, j| {
        z.row(i)
            .iter()
            .zip(centers.row(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }))
}

/// Student-t (one degree of freedom) assignment of rows of `z` to `centers`,
/// row-normalized.
pub fn soft_assign(z: &Matrix, centers: &Matrix) -> Result<Matrix> {
    let mut q = squared_distances(z, centers)?.map(|d| 1.0 / (1.0 + d));
    for i in 0..q.rows() {
        let row = q.row_mut(i);
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;

    const LN2: f64 = std::f64::consts::LN_2;

    #[test]
    fn bce_half_half_is_ln2() {
        let p = Matrix::filled(2, 3, 0.5);
        assert!((elementwise_bce(&p, &p).unwrap() - LN2).abs() < 1e-15);
    }

    #[test]
    fn bce_perfect_match_near_zero() {
        let t = Matrix::from_rows(&[[BCE_EPS, 1.0 - BCE_EPS]]).unwrap();
        assert!(elementwise_bce(&t, &t).unwrap() < 2e-6);
    }

    #[test]
    fn bce_half_against_one() {
        let p = Matrix::filled(1, 4, 0.5);
        let t = Matrix::ones(1, 4);
        assert!((elementwise_bce(&p, &t).unwrap() - LN2).abs() < 1e-15);
    }

    #[test]
    fn bce_clamps_saturated_inputs() {
        let p = Matrix::from_rows(&[[0.0, 1.0]]).unwrap();
        let t = Matrix::from_rows(&[[1.0, 0.0]]).unwrap();
        assert!(elementwise_bce(&p, &t).unwrap().is_finite());
    }

    #[test]
    fn bce_shape_mismatch() {
        assert!(elementwise_bce(&Matrix::zeros(1, 2), &Matrix::zeros(2, 1)).is_err());
    }
}
