use log::debug;

use super::eigen::is_hurwitz;
use super::linear::LuSolver;
use super::lyapunov::solve_lyapunov;
use super::{symmetrize, RealMatrix, STAB_MARGIN, TOL_CARE};
use crate::error::{Error, Result};

const NEWTON_MAX_ITER: usize = 60;
const SIGN_MAX_ITER: usize = 100;
/// Eigenvalues of the reduced unstable block are pushed left of `-BASS_SHIFT`.
const BASS_SHIFT: f64 = 1.0;

#[derive(Clone, Debug)]
pub struct CareSolution {
    /// Stabilizing solution `X = X^T >= 0`.
    pub x: RealMatrix,
    /// Optimal feedback `K = -R^{-1} B^T X`, so that `A + B K` is Hurwitz.
    pub gain: RealMatrix,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Stabilizing solution of `A^T X + X A - X B R^{-1} B^T X + Q = 0`.
///
/// Newton-Kleinman iteration started from [`stabilizing_gain`]; each step
/// is one Lyapunov solve.
pub fn solve_care(a: &RealMatrix, b: &RealMatrix, q: &RealMatrix, r: &RealMatrix) -> Result<CareSolution> {
    let n = a.nrows();
    let m = b.ncols();
    if !a.is_square() || b.nrows() != n || q.shape() != (n, n) || r.shape() != (m, m) {
        return Err(Error::DimensionMismatch(format!(
            "CARE: A {:?}, B {:?}, Q {:?}, R {:?}",
            a.shape(),
            b.shape(),
            q.shape(),
            r.shape()
        )));
    }
    let r_chol = r
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidConfig("control weight R must be positive definite".into()))?;
    let r_inv_bt = r_chol.solve(&b.transpose());

    let mut gain = stabilizing_gain(a, b, STAB_MARGIN)?;
    let mut best: Option<(RealMatrix, RealMatrix, f64)> = None;
    let mut stalled = 0;
    let mut iterations = 0;
    for iteration in 1..=NEWTON_MAX_ITER {
        iterations = iteration;
        let closed = a + b * &gain;
        let forcing = q + gain.transpose() * r * &gain;
        let x = match solve_lyapunov(&closed, &forcing) {
            Ok(x) => x,
            Err(Error::NotHurwitz { .. }) => {
                return Err(Error::NotStabilizable(
                    "Newton-Kleinman iterate lost stability".into(),
                ))
            }
            Err(e) => return Err(e),
        };
        gain = -(&r_inv_bt * &x);
        let res = care_residual(a, b, q, &r_inv_bt, &x);
        debug!("newton-kleinman iteration {iteration}: relative residual {res:.3e}");

        let improved = best.as_ref().is_none_or(|(_, _, r)| res < 0.5 * r);
        if best.as_ref().is_none_or(|(_, _, r)| res < *r) {
            best = Some((x, gain.clone(), res));
        }
        if res <= 1e-3 * TOL_CARE {
            break;
        }
        if improved {
            stalled = 0;
        } else {
            stalled += 1;
            if stalled >= 3 {
                break;
            }
        }
    }

    let (x, gain, residual) = best.expect("at least one Newton step");
    if residual > TOL_CARE {
        return Err(Error::ConvergenceFailure {
            what: "Newton-Kleinman Riccati iteration",
            iterations,
        });
    }
    let (stable, _) = is_hurwitz(&(a + b * &gain))?;
    if !stable {
        return Err(Error::NotStabilizable("Riccati gain is not stabilizing".into()));
    }
    Ok(CareSolution {
        x: symmetrize(&x),
        gain,
        iterations,
        relative_residual: residual,
    })
}

/// Normalized CARE residual.
fn care_residual(a: &RealMatrix, b: &RealMatrix, q: &RealMatrix, r_inv_bt: &RealMatrix, x: &RealMatrix) -> f64 {
    let atx = a.transpose() * x;
    let quad = x * b * (r_inv_bt * x);
    let res = &atx + atx.transpose() - &quad + q;
    let scale = q.norm() + 2.0 * atx.norm() + quad.norm();
    if scale == 0.0 {
        0.0
    } else {
        res.norm() / scale
    }
}

/// Gain `K` with `A + B K` Hurwitz, acting only on the modes with real part
/// above `-margin`.
///
/// The left invariant subspace `V` of those modes comes from the matrix sign
/// function; the reduced pair `(S, V^T B)` with `S = V^T A V` is stabilized
/// by the Bass formula `F = -B_r^T P^{-1}`, and `K = F V^T`. The remaining
/// eigenvalues of `A` are left where they are.
pub fn stabilizing_gain(a: &RealMatrix, b: &RealMatrix, margin: f64) -> Result<RealMatrix> {
    let n = a.nrows();
    let m = b.ncols();
    let basis = unstable_left_subspace(a, margin)?;
    let k = basis.ncols();
    if k == 0 {
        return Ok(RealMatrix::zeros(m, n));
    }
    let s = basis.transpose() * a * &basis;
    let br = basis.transpose() * b;

    // -(S + beta I) is Hurwitz because every eigenvalue of S has real part > -margin.
    let shifted = -(s + RealMatrix::identity(k, k) * (BASS_SHIFT + margin)).transpose();
    let p = solve_lyapunov(&shifted, &(&br * br.transpose()))?;
    let eig = p.clone().symmetric_eigen().eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    if !(lo > 1e-12 * hi) {
        return Err(Error::NotStabilizable(format!(
            "{k} mode(s) with real part above {:.3} are not controllable",
            -margin
        )));
    }
    let p_inv_br = p
        .cholesky()
        .ok_or_else(|| Error::NotStabilizable("Bass Gramian is not positive definite".into()))?
        .solve(&br);
    let gain = -(p_inv_br.transpose()) * basis.transpose();

    let (stable, abscissa) = is_hurwitz(&(a + b * &gain))?;
    if !stable {
        return Err(Error::NotStabilizable(format!(
            "initial gain leaves spectral abscissa {abscissa:.3e}"
        )));
    }
    Ok(gain)
}

/// Orthonormal basis of the invariant subspace of `A^T` belonging to the
/// eigenvalues with real part greater than `-margin`.
fn unstable_left_subspace(a: &RealMatrix, margin: f64) -> Result<RealMatrix> {
    let n = a.nrows();
    let sign = matrix_sign(&(a.transpose() + RealMatrix::identity(n, n) * margin))?;
    let projector = (RealMatrix::identity(n, n) + sign) * 0.5;
    let k = projector.trace().round().clamp(0.0, n as f64) as usize;
    if k == 0 {
        return Ok(RealMatrix::zeros(n, 0));
    }
    if k == n {
        return Ok(RealMatrix::identity(n, n));
    }
    let svd = projector.svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let cols: Vec<_> = order[..k].iter().map(|&i| u.column(i).into_owned()).collect();
    Ok(RealMatrix::from_columns(&cols))
}

/// Newton iteration for `sign(M)` with Frobenius-norm scaling.
fn matrix_sign(m: &RealMatrix) -> Result<RealMatrix> {
    let mut z = m.clone();
    let mut last_change = f64::INFINITY;
    for iteration in 0..SIGN_MAX_ITER {
        let z_inv = LuSolver::new(z.clone())
            .map_err(|_| Error::NotStabilizable("eigenvalue on the stability margin".into()))?
            .solve(&RealMatrix::identity(z.nrows(), z.nrows()))?;
        let scale = (z_inv.norm() / z.norm()).sqrt();
        let next = (&z * scale + z_inv / scale) * 0.5;
        let change = (&next - &z).norm();
        z = next;
        // Quadratic convergence ends in a rounding-level plateau.
        if change <= 1e-12 * z.norm() || (iteration > 5 && change >= last_change && change <= 1e-6 * z.norm()) {
            return Ok(z);
        }
        last_change = change;
    }
    Err(Error::ConvergenceFailure {
        what: "matrix sign iteration",
        iterations: SIGN_MAX_ITER,
    })
}
