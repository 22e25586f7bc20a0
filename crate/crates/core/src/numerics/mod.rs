//! Dense real/complex kernels and matrix-equation solvers.
//!
//! Everything here works on `nalgebra` dynamic matrices. Solvers are pure
//! functions of their inputs, so they can be called from any number of
//! threads at once.

mod care;
mod eigen;
mod expm;
mod linear;
mod lyapunov;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub use care::{solve_care, stabilizing_gain, CareSolution};
pub use eigen::{eigenvalues, is_hurwitz, min_singular_value, real_schur, spectral_abscissa, RealSchur};
pub use expm::matrix_exponential;
pub use linear::{solve_linear, solve_real, LuSolver};
pub use lyapunov::{solve_lyapunov, solve_sylvester_kronecker};

pub type RealMatrix = DMatrix<f64>;
pub type ComplexMatrix = DMatrix<Complex64>;
pub type RealVector = DVector<f64>;
pub type ComplexVector = DVector<Complex64>;

/// Relative residual accepted from a linear solve.
pub const TOL_SOLVE: f64 = 1e-10;
/// Pivots below `PIVOT_TOL * ||M||_1` flag a singular system.
pub const PIVOT_TOL: f64 = 1e-13;
/// Relative residual required of a Lyapunov solution.
pub const TOL_LYAPUNOV: f64 = 1e-9;
/// Relative residual required of a Riccati solution.
pub const TOL_CARE: f64 = 1e-8;
/// Eigenvalues with real part above `-STAB_MARGIN` are treated as unstable
/// when building the initial Newton-Kleinman gain.
pub const STAB_MARGIN: f64 = 0.1;
/// Matrix exponential refuses arguments with `||M t||_1` above this.
pub const EXPM_CAP: f64 = 700.0;

pub fn to_complex(m: &RealMatrix) -> ComplexMatrix {
    m.map(|x| Complex64::new(x, 0.0))
}

pub fn real_part(m: &ComplexMatrix) -> RealMatrix {
    m.map(|z| z.re)
}

pub fn imag_part(m: &ComplexMatrix) -> RealMatrix {
    m.map(|z| z.im)
}

pub fn conj(m: &ComplexMatrix) -> ComplexMatrix {
    m.map(|z| z.conj())
}

/// Induced 1-norm (maximum absolute column sum).
pub fn norm1<T: nalgebra::ComplexField<RealField = f64>>(m: &DMatrix<T>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|x| x.clone().modulus()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn all_finite(m: &RealMatrix) -> bool {
    m.iter().all(|x| x.is_finite())
}

/// Stacks blocks given as rows of matrices; every block in a row must have
/// the same number of rows and every block column the same width.
pub fn block(rows: &[&[&RealMatrix]]) -> RealMatrix {
    let heights: Vec<usize> = rows.iter().map(|r| r[0].nrows()).collect();
    let widths: Vec<usize> = rows[0].iter().map(|b| b.ncols()).collect();
    let mut out = RealMatrix::zeros(heights.iter().sum(), widths.iter().sum());
    let mut r0 = 0;
    for (row, h) in rows.iter().zip(&heights) {
        let mut c0 = 0;
        for (blk, w) in row.iter().zip(&widths) {
            assert_eq!((blk.nrows(), blk.ncols()), (*h, *w), "block shape");
            out.view_mut((r0, c0), (*h, *w)).copy_from(*blk);
            c0 += w;
        }
        r0 += h;
    }
    out
}

/// Symmetric part `(M + M^T) / 2`.
pub fn symmetrize(m: &RealMatrix) -> RealMatrix {
    (m + m.transpose()) * 0.5
}
