use nalgebra::linalg::balancing::balance_parlett_reinsch;
use nalgebra::Schur;
use num_complex::Complex64;

use super::{ComplexMatrix, RealMatrix};
use crate::error::{Error, Result};

const SCHUR_ITER_PER_DIM: usize = 100;

/// Real Schur form `M = Q T Q^T` with `T` upper quasi-triangular.
#[derive(Clone, Debug)]
pub struct RealSchur {
    pub q: RealMatrix,
    pub t: RealMatrix,
}

impl RealSchur {
    /// Diagonal block boundaries of `T`: each entry is `(start, size)` with
    /// size 1 or 2.
    pub fn blocks(&self) -> Vec<(usize, usize)> {
        let n = self.t.nrows();
        let mut out = Vec::new();
        let mut i = 0;
        while i < n {
            if i + 1 < n && self.t[(i + 1, i)] != 0.0 {
                out.push((i, 2));
                i += 2;
            } else {
                out.push((i, 1));
                i += 1;
            }
        }
        out
    }

    pub fn eigenvalues(&self) -> Vec<Complex64> {
        let t = &self.t;
        let mut out = Vec::with_capacity(t.nrows());
        for (i, size) in self.blocks() {
            if size == 1 {
                out.push(Complex64::new(t[(i, i)], 0.0));
            } else {
                let (a, b, c, d) = (t[(i, i)], t[(i, i + 1)], t[(i + 1, i)], t[(i + 1, i + 1)]);
                let half_tr = 0.5 * (a + d);
                let disc = 0.25 * (a - d) * (a - d) + b * c;
                if disc >= 0.0 {
                    let s = disc.sqrt();
                    out.push(Complex64::new(half_tr + s, 0.0));
                    out.push(Complex64::new(half_tr - s, 0.0));
                } else {
                    let s = (-disc).sqrt();
                    out.push(Complex64::new(half_tr, s));
                    out.push(Complex64::new(half_tr, -s));
                }
            }
        }
        out
    }
}

pub fn real_schur(m: &RealMatrix) -> Result<RealSchur> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "Schur form needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let n = m.nrows();
    let iterations = SCHUR_ITER_PER_DIM * n.max(1);
    let schur = Schur::try_new(m.clone(), f64::EPSILON, iterations).ok_or(Error::ConvergenceFailure {
        what: "real Schur decomposition",
        iterations,
    })?;
    let (q, t) = schur.unpack();
    Ok(RealSchur { q, t })
}

/// All eigenvalues of a real square matrix, with multiplicity.
///
/// The matrix is balanced first; complex eigenvalues are returned in
/// conjugate pairs.
pub fn eigenvalues(m: &RealMatrix) -> Result<Vec<Complex64>> {
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    let mut balanced = m.clone();
    if m.is_square() && m.nrows() > 2 {
        balance_parlett_reinsch(&mut balanced);
    }
    Ok(real_schur(&balanced)?.eigenvalues())
}

/// Largest real part over the spectrum.
pub fn spectral_abscissa(m: &RealMatrix) -> Result<f64> {
    Ok(eigenvalues(m)?
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// `(abscissa < 0, abscissa)`.
pub fn is_hurwitz(m: &RealMatrix) -> Result<(bool, f64)> {
    let abscissa = spectral_abscissa(m)?;
    Ok((abscissa < 0.0, abscissa))
}

/// Smallest of the `min(rows, cols)` singular values.
pub fn min_singular_value(m: &ComplexMatrix) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::to_complex;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sorted(mut v: Vec<Complex64>) -> Vec<Complex64> {
        v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        v
    }

    #[test]
    fn diagonal_spectrum() {
        let m = RealMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-1.0, -2.0]));
        let ev = sorted(eigenvalues(&m).unwrap());
        assert!((ev[0] - Complex64::new(-2.0, 0.0)).norm() < 1e-14);
        assert!((ev[1] - Complex64::new(-1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn rotation_generator_spectrum() {
        // characteristic polynomial lambda^2 + omega^2
        for omega in [1.0, std::f64::consts::PI] {
            let m = RealMatrix::from_row_slice(2, 2, &[0.0, omega, -omega, 0.0]);
            let ev = sorted(eigenvalues(&m).unwrap());
            assert!((ev[0] - Complex64::new(0.0, -omega)).norm() < 1e-13);
            assert!((ev[1] - Complex64::new(0.0, omega)).norm() < 1e-13);
        }
    }

    #[test]
    fn hurwitz_classification() {
        assert_eq!(is_hurwitz(&RealMatrix::from_element(1, 1, -1.0)).unwrap(), (true, -1.0));
        let (ok, abscissa) = is_hurwitz(&RealMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -1.0])).unwrap();
        assert!(ok);
        assert!((abscissa + 0.5).abs() < 1e-14);
    }

    #[test]
    fn eigenvalue_backward_error_on_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [3, 8, 20, 40] {
            let m = RealMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
            let scale = m.norm();
            for lambda in eigenvalues(&m).unwrap() {
                let shifted = to_complex(&m) - ComplexMatrix::identity(n, n) * lambda;
                assert!(min_singular_value(&shifted) <= 1e-8 * scale);
            }
        }
    }
}
