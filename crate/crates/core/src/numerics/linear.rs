use nalgebra::{ComplexField, DMatrix, Dyn, LU};

use super::{norm1, ComplexMatrix, RealMatrix, PIVOT_TOL, TOL_SOLVE};
use crate::error::{Error, Result};

/// LU factorization with partial pivoting that refuses near-singular input
/// and polishes solutions with iterative refinement.
pub struct LuSolver<T: ComplexField<RealField = f64>> {
    matrix: DMatrix<T>,
    lu: LU<T, Dyn, Dyn>,
}

impl<T: ComplexField<RealField = f64>> LuSolver<T> {
    pub fn new(matrix: DMatrix<T>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "solve_linear needs a square matrix, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let threshold = PIVOT_TOL * norm1(&matrix);
        let lu = LU::new(matrix.clone());
        let pivot = lu
            .u()
            .diagonal()
            .iter()
            .map(|d| d.clone().modulus())
            .fold(f64::INFINITY, f64::min);
        if !(pivot > threshold) {
            return Err(Error::SingularMatrix { pivot, threshold });
        }
        Ok(Self { matrix, lu })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn solve(&self, rhs: &DMatrix<T>) -> Result<DMatrix<T>> {
        if rhs.nrows() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "right-hand side has {} rows, matrix has {}",
                rhs.nrows(),
                self.dim()
            )));
        }
        let mut x = self.lu.solve(rhs).ok_or(Error::SingularMatrix {
            pivot: 0.0,
            threshold: 0.0,
        })?;
        let scale = rhs.norm();
        for _ in 0..2 {
            let r = rhs - &self.matrix * &x;
            if r.norm() <= TOL_SOLVE * scale {
                break;
            }
            if let Some(dx) = self.lu.solve(&r) {
                x += dx;
            }
        }
        Ok(x)
    }
}

/// Solves `M X = RHS` for complex `M`.
pub fn solve_linear(m: &ComplexMatrix, rhs: &ComplexMatrix) -> Result<ComplexMatrix> {
    LuSolver::new(m.clone())?.solve(rhs)
}

/// Solves `M X = RHS` for real `M`.
pub fn solve_real(m: &RealMatrix, rhs: &RealMatrix) -> Result<RealMatrix> {
    LuSolver::new(m.clone())?.solve(rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use num_complex::Complex64;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn identity_returns_rhs() {
        let m = ComplexMatrix::identity(3, 3);
        let b = ComplexMatrix::from_row_slice(3, 1, &[c(1.0, 2.0), c(-3.0, 0.5), c(0.0, -1.0)]);
        let x = solve_linear(&m, &b).unwrap();
        assert_eq!(x, b);
    }

    #[test]
    fn diagonal_system() {
        let m = ComplexMatrix::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(4.0, 0.0)]);
        let b = ComplexMatrix::from_row_slice(2, 1, &[c(2.0, 0.0), c(8.0, 0.0)]);
        let x = solve_linear(&m, &b).unwrap();
        assert_relative_eq!(x[0].re, 1.0);
        assert_relative_eq!(x[1].re, 2.0);
        assert_eq!(x[0].im, 0.0);
    }

    #[test]
    fn scalar_resolvent() {
        // (i - (-1)) x = b  =>  x = b / (1 + i)
        let m = ComplexMatrix::from_element(1, 1, c(1.0, 1.0));
        let b = ComplexMatrix::from_element(1, 1, c(3.0, -2.0));
        let x = solve_linear(&m, &b).unwrap();
        let expect = c(3.0, -2.0) / c(1.0, 1.0);
        assert!((x[0] - expect).norm() < 1e-15);
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let m = RealMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let err = solve_real(&m, &RealMatrix::identity(2, 2)).unwrap_err();
        assert!(matches!(err, Error::SingularMatrix { .. }));
    }

    #[test]
    fn rhs_shape_is_checked() {
        let m = RealMatrix::identity(3, 3);
        assert!(matches!(
            solve_real(&m, &RealMatrix::zeros(2, 1)),
            Err(Error::DimensionMismatch(_))
        ));
    }
}
