use super::eigen::{real_schur, RealSchur};
use super::linear::LuSolver;
use super::{symmetrize, RealMatrix, TOL_LYAPUNOV};
use crate::error::{Error, Result};

/// Solves `A X + X B = C` through the Kronecker form
/// `(I ⊗ A + B^T ⊗ I) vec(X) = vec(C)`.
///
/// Dense and O((rs)^3); meant for small blocks and as a reference solver.
pub fn solve_sylvester_kronecker(a: &RealMatrix, b: &RealMatrix, c: &RealMatrix) -> Result<RealMatrix> {
    let (r, s) = (a.nrows(), b.nrows());
    if !a.is_square() || !b.is_square() || c.shape() != (r, s) {
        return Err(Error::DimensionMismatch(format!(
            "Sylvester: A {:?}, B {:?}, C {:?}",
            a.shape(),
            b.shape(),
            c.shape()
        )));
    }
    let system = RealMatrix::identity(s, s).kronecker(a) + b.transpose().kronecker(&RealMatrix::identity(r, r));
    let rhs = RealMatrix::from_column_slice(r * s, 1, c.as_slice());
    let x = LuSolver::new(system)?.solve(&rhs)?;
    Ok(RealMatrix::from_column_slice(r, s, x.as_slice()))
}

/// Solves `A^T X + X A + Q = 0` for Hurwitz `A` (Bartels-Stewart on the
/// real Schur form of `A`).
pub fn solve_lyapunov(a: &RealMatrix, q: &RealMatrix) -> Result<RealMatrix> {
    let n = a.nrows();
    if !a.is_square() || q.shape() != (n, n) {
        return Err(Error::DimensionMismatch(format!(
            "Lyapunov: A {:?}, Q {:?}",
            a.shape(),
            q.shape()
        )));
    }
    let schur = real_schur(a)?;
    let abscissa = schur
        .eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    if abscissa >= 0.0 {
        return Err(Error::NotHurwitz { abscissa });
    }

    let mut x = symmetrize(&lyapunov_with_schur(&schur, q)?);
    let q_norm = q.norm();
    for _ in 0..2 {
        let residual = a.transpose() * &x + &x * a + q;
        if residual.norm() <= 1e-2 * TOL_LYAPUNOV * q_norm {
            break;
        }
        x += symmetrize(&lyapunov_with_schur(&schur, &residual)?);
    }
    Ok(x)
}

fn lyapunov_with_schur(schur: &RealSchur, q: &RealMatrix) -> Result<RealMatrix> {
    let (u, t) = (&schur.q, &schur.t);
    let n = t.nrows();
    // T^T Y + Y T = C with Y = U^T X U and C = -U^T Q U.
    let c = -(u.transpose() * q * u);
    let blocks = schur.blocks();
    let mut y = RealMatrix::zeros(n, n);
    for &(j, sj) in &blocks {
        for &(i, si) in &blocks {
            let mut rhs = c.view((i, j), (si, sj)).into_owned();
            if i > 0 {
                rhs -= t.view((0, i), (i, si)).transpose() * y.view((0, j), (i, sj));
            }
            if j > 0 {
                rhs -= y.view((i, 0), (si, j)) * t.view((0, j), (j, sj));
            }
            let tii_t = t.view((i, i), (si, si)).transpose();
            let tjj = t.view((j, j), (sj, sj)).into_owned();
            let block = solve_sylvester_kronecker(&tii_t, &tjj, &rhs)?;
            y.view_mut((i, j), (si, sj)).copy_from(&block);
        }
    }
    Ok(u * y * u.transpose())
}
