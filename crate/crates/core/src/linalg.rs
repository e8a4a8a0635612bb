//! Dense linear solves backed by nalgebra's partial-pivoting LU.

use nalgebra::{DMatrix, DVector, LU};

use crate::error::{FlowError, Result};

/// LU factorization of a square matrix together with the matrix 1-norm.
pub struct DenseLu {
    lu: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    norm1: f64,
    dim: usize,
}

impl DenseLu {
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        assert!(a.is_square(), "LU of a non-square matrix");
        let dim = a.nrows();
        let norm1 = norm1(&a);
        let lu = a.lu();
        if !lu.is_invertible() {
            return Err(FlowError::SingularMatrix);
        }
        Ok(Self { lu, norm1, dim })
    }

    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        let x = self.lu.solve(b).ok_or(FlowError::SingularMatrix)?;
        if x.iter().all(|v| v.is_finite()) {
            Ok(x)
        } else {
            Err(FlowError::SingularMatrix)
        }
    }

    pub fn solve_slice(&self, b: &[f64]) -> Result<Vec<f64>> {
        Ok(self.solve(&DVector::from_column_slice(b))?.as_slice().to_vec())
    }

    /// 1-norm condition number `||A||_1 ||A^-1||_1`, with the inverse built from the factors.
    pub fn condition_1norm(&self) -> f64 {
        let mut inv = DMatrix::identity(self.dim, self.dim);
        if !self.lu.solve_mut(&mut inv) {
            return f64::INFINITY;
        }
        let c = self.norm1 * norm1(&inv);
        if c.is_finite() {
            c
        } else {
            f64::INFINITY
        }
    }
}

fn norm1(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Solves `a x = b` by LU with partial pivoting.
pub fn solve_dense(a: DMatrix<f64>, b: &[f64]) -> Result<Vec<f64>> {
    DenseLu::new(a)?.solve_slice(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 2.0, 3.0]);
        let x = solve_dense(a, &[1.0, 2.0]).unwrap();
        assert!((x[0] - 0.1).abs() < 1e-15);
        assert!((x[1] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn singular_matrix_is_reported() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(DenseLu::new(a).is_err());
    }

    #[test]
    fn condition_of_diagonal() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1e-3, 10.0]));
        let c = DenseLu::new(a).unwrap().condition_1norm();
        assert!((c - 1e4).abs() < 1e-8);
    }
}
