//! Frequency data of the state-feedback stabilized plant and the real
//! matrices `B1`, `HK` built from it.
//!
//! With `A_K = A + B K0` and `C_K = C + D K0`:
//!
//! ```text
//! P_K(λ)  = C_K (λ - A_K)^{-1} B + D
//! P_KI(λ) = C_K (λ - A_K)^{-1}
//! ```
//!
//! Only values at `+iω` are stored; the `-iω` values are their conjugates.

use log::debug;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::internal_model::InternalModel;
use crate::model::StateSpaceModel;
use crate::numerics::{
    min_singular_value, solve_sylvester_kronecker, to_complex, ComplexMatrix, ComplexVector, LuSolver, RealMatrix,
};
use crate::signals::Frequencies;

/// Allowed imaginary residue of a real-form assembly, relative to its size.
pub const REAL_RESIDUE_TOL: f64 = 1e-12;
/// Transmission zero threshold relative to the transfer function scale.
pub const TZ_TOL: f64 = 1e-8;

fn shifted(a: &RealMatrix, lambda: Complex64) -> ComplexMatrix {
    let n = a.nrows();
    ComplexMatrix::identity(n, n) * lambda - to_complex(a)
}

fn factor(m: ComplexMatrix, lambda: Complex64) -> Result<LuSolver<Complex64>> {
    LuSolver::new(m).map_err(|e| match e {
        Error::SingularMatrix { .. } => Error::pole(lambda),
        other => other,
    })
}

/// Direct route: one factorization of `iω - A_K`.
pub struct DirectRoute<'a> {
    sys: &'a StateSpaceModel,
    ck: RealMatrix,
    lu: LuSolver<Complex64>,
}

impl<'a> DirectRoute<'a> {
    pub fn new(sys: &'a StateSpaceModel, k0: &RealMatrix, omega: f64) -> Result<Self> {
        let lambda = Complex64::new(0.0, omega);
        let ak = &sys.a + &sys.b * k0;
        let lu = factor(shifted(&ak, lambda), lambda)?;
        Ok(Self {
            sys,
            ck: &sys.c + &sys.d * k0,
            lu,
        })
    }

    /// Solves `(iω - A_K) x0 = B u0 + ψ0` and returns `C_K x0 + D u0`, that
    /// is `P_K(iω) u0 + P_KI(iω) ψ0`.
    pub fn probe(&self, u0: &ComplexVector, psi0: &ComplexVector) -> Result<ComplexVector> {
        let rhs = to_complex(&self.sys.b) * u0 + psi0;
        let x0 = self.lu.solve(&ComplexMatrix::from_column_slice(rhs.len(), 1, rhs.as_slice()))?;
        Ok(to_complex(&self.ck) * x0.column(0) + to_complex(&self.sys.d) * u0)
    }

    /// `(P_K(iω), P_KI(iω))` by probing with unit vectors.
    pub fn values(&self) -> Result<(ComplexMatrix, ComplexMatrix)> {
        let n = self.sys.n_state();
        let resolvent = self.lu.solve(&ComplexMatrix::identity(n, n))?;
        let pki = to_complex(&self.ck) * resolvent;
        let pk = &pki * to_complex(&self.sys.b) + to_complex(&self.sys.d);
        Ok((pk, pki))
    }
}

pub fn eval_pk_pki_direct(
    sys: &StateSpaceModel,
    k0: &RealMatrix,
    omega: f64,
    u0: &ComplexVector,
    psi0: &ComplexVector,
) -> Result<ComplexVector> {
    DirectRoute::new(sys, k0, omega)?.probe(u0, psi0)
}

/// Values produced by the route through the open-loop resolvent.
#[derive(Clone, Debug)]
pub struct ReducedValues {
    pub p: ComplexMatrix,
    pub gk: ComplexMatrix,
    pub pk: ComplexMatrix,
    pub pki: ComplexMatrix,
}

/// `P_K = P (I - G_K)^{-1}`, `P_KI = C R + P_K K0 R` with `R = (iω - A)^{-1}`
/// and `G_K = K0 R B`. Fails with a pole whenever `iω` is an eigenvalue of
/// `A`.
pub fn eval_pk_pki_reduced(sys: &StateSpaceModel, k0: &RealMatrix, omega: f64) -> Result<ReducedValues> {
    let lambda = Complex64::new(0.0, omega);
    let (p_out, m) = (sys.n_output(), sys.n_input());
    // (λ - A)^T Z = [C^T, K0^T]  gives  Z^T = [C R; K0 R].
    let lu = factor(shifted(&sys.a, lambda).transpose(), lambda)?;
    let mut probes = RealMatrix::zeros(sys.n_state(), p_out + m);
    probes.columns_mut(0, p_out).copy_from(&sys.c.transpose());
    probes.columns_mut(p_out, m).copy_from(&k0.transpose());
    let z = lu.solve(&to_complex(&probes))?.transpose();
    let cr = z.rows(0, p_out).into_owned();
    let k0r = z.rows(p_out, m).into_owned();
    let b = to_complex(&sys.b);
    let p = &cr * &b + to_complex(&sys.d);
    let gk = &k0r * &b;
    // P_K (I - G_K) = P, solved as (I - G_K)^T P_K^T = P^T.
    let loop_lu = factor((ComplexMatrix::identity(m, m) - &gk).transpose(), lambda)?;
    let pk = loop_lu.solve(&p.transpose())?.transpose();
    let pki = &cr + &pk * &k0r;
    Ok(ReducedValues { p, gk, pk, pki })
}

/// Values of `P_K` and `P_KI` at one nonnegative frequency.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FreqPoint {
    pub omega: f64,
    #[serde(with = "crate::dense::complex")]
    pub pk: ComplexMatrix,
    #[serde(with = "crate::dense::complex")]
    pub pki: ComplexMatrix,
}

/// Direct-route values at every frequency, evaluated in parallel.
pub fn compute_freq_points(sys: &StateSpaceModel, k0: &RealMatrix, freqs: &Frequencies) -> Result<Vec<FreqPoint>> {
    freqs
        .values()
        .par_iter()
        .map(|&omega| {
            let (pk, pki) = DirectRoute::new(sys, k0, omega)?.values()?;
            Ok(FreqPoint { omega, pk, pki })
        })
        .collect()
}

/// Stacks `P(0)` and, for each `ω_k > 0`, the block
/// `½ [P(iω_k) + P(-iω_k); i (P(iω_k) - P(-iω_k))]`.
///
/// `plus[0]` is the value at 0 and `minus[0]` is ignored. Fails if the
/// imaginary part left over by the assembly is not negligible.
pub fn assemble_real_form(plus: &[ComplexMatrix], minus: &[ComplexMatrix]) -> Result<RealMatrix> {
    if plus.is_empty() || plus.len() != minus.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} values at +iω, {} at -iω",
            plus.len(),
            minus.len()
        )));
    }
    let (p, cols) = plus[0].shape();
    let rows = p * (2 * plus.len() - 1);
    let mut out = ComplexMatrix::zeros(rows, cols);
    out.rows_mut(0, p).copy_from(&plus[0]);
    let half = Complex64::new(0.5, 0.0);
    let half_i = Complex64::new(0.0, 0.5);
    for (k, (pp, pm)) in plus.iter().zip(minus).enumerate().skip(1) {
        if pp.shape() != (p, cols) || pm.shape() != (p, cols) {
            return Err(Error::DimensionMismatch(format!("frequency block {k} has the wrong shape")));
        }
        let start = p * (2 * k - 1);
        out.rows_mut(start, p).copy_from(&((pp + pm) * half));
        out.rows_mut(start + p, p).copy_from(&((pp - pm) * half_i));
    }
    let scale = out.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
    let residue = out.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    if residue > REAL_RESIDUE_TOL * scale {
        return Err(Error::NonRealResidue { residue });
    }
    Ok(out.map(|z| z.re))
}

fn real_form_of(values: Vec<ComplexMatrix>) -> Result<RealMatrix> {
    let minus: Vec<ComplexMatrix> = values.iter().map(|m| m.map(|z| z.conj())).collect();
    assemble_real_form(&values, &minus)
}

/// `B1 = [P_K(0); B1^1; …; B1^q]`.
pub fn build_b1(points: &[FreqPoint]) -> Result<RealMatrix> {
    real_form_of(points.iter().map(|pt| pt.pk.clone()).collect())
}

/// `HK = [P_KI(0); HK^1; …; HK^q]`.
pub fn build_hk(points: &[FreqPoint]) -> Result<RealMatrix> {
    real_form_of(points.iter().map(|pt| pt.pki.clone()).collect())
}

/// `HK` composed with the weighted orthogonal projection onto the columns
/// of `basis`, computed with one direct-route solve per basis vector and
/// frequency.
pub fn build_hk_truncated(
    sys: &StateSpaceModel,
    k0: &RealMatrix,
    freqs: &Frequencies,
    basis: &RealMatrix,
) -> Result<RealMatrix> {
    let n = sys.n_state();
    if basis.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "basis has {} rows, state dimension is {n}",
            basis.nrows()
        )));
    }
    let count = basis.ncols();
    let p = sys.n_output();
    let u0 = ComplexVector::zeros(sys.n_input());
    let probed: Vec<ComplexMatrix> = freqs
        .values()
        .par_iter()
        .map(|&omega| {
            let route = DirectRoute::new(sys, k0, omega)?;
            let mut block = ComplexMatrix::zeros(p, count);
            for j in 0..count {
                let psi = basis.column(j).map(|x| Complex64::new(x, 0.0));
                block.set_column(j, &route.probe(&u0, &psi)?);
            }
            Ok(block)
        })
        .collect::<Result<_>>()?;
    let coeffs = real_form_of(probed)?;
    let mut weighted = basis.transpose();
    for (mut col, w) in weighted.column_iter_mut().zip(sys.weights.iter()) {
        col *= *w;
    }
    Ok(coeffs * weighted)
}

/// Hilbert-Schmidt norm of `H` as a map from the weighted state space.
pub fn weighted_hs_norm(h: &RealMatrix, weights: &crate::numerics::RealVector) -> f64 {
    let mut scaled = h.clone();
    for (mut col, w) in scaled.column_iter_mut().zip(weights.iter()) {
        col /= w.sqrt();
    }
    scaled.norm()
}

/// `||G1 HK - HK A_K - G2 C_K|| / ||G2 C_K||`.
pub fn sylvester_residual(
    hk: &RealMatrix,
    im: &InternalModel,
    sys: &StateSpaceModel,
    k0: &RealMatrix,
) -> f64 {
    let ak = &sys.a + &sys.b * k0;
    let forcing = &im.g2 * (&sys.c + &sys.d * k0);
    let residual = &im.g1 * hk - hk * ak - &forcing;
    residual.norm() / forcing.norm().max(f64::MIN_POSITIVE)
}

/// `HK` as the solution of `G1 H - H A_K = G2 C_K` through the dense
/// Kronecker system.
pub fn hk_from_sylvester(im: &InternalModel, sys: &StateSpaceModel, k0: &RealMatrix) -> Result<RealMatrix> {
    let ak = &sys.a + &sys.b * k0;
    let forcing = &im.g2 * (&sys.c + &sys.d * k0);
    solve_sylvester_kronecker(&im.g1, &(-ak), &forcing)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZeroMargin {
    pub omega: f64,
    /// Smallest singular value of `P_K(iω)`.
    pub sigma_min: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransmissionZeroReport {
    pub tolerance: f64,
    pub margins: Vec<ZeroMargin>,
}

impl TransmissionZeroReport {
    pub fn pass(&self) -> bool {
        self.margins.iter().all(|m| m.pass)
    }

    pub fn into_result(self) -> Result<Self> {
        if self.pass() {
            Ok(self)
        } else {
            Err(Error::TransmissionZero {
                frequencies: self.margins.iter().filter(|m| !m.pass).map(|m| m.omega).collect(),
            })
        }
    }
}

/// Typical size of the stabilized transfer function,
/// `||C_K|| ||B|| / ||A_K||`, used as a floor for the zero threshold.
pub fn reference_gain(sys: &StateSpaceModel, k0: &RealMatrix) -> f64 {
    let ak = &sys.a + &sys.b * k0;
    let ck = &sys.c + &sys.d * k0;
    ck.norm() * sys.b.norm() / ak.norm().max(f64::MIN_POSITIVE) + sys.d.norm()
}

/// Flags frequencies where `P_K(iω)` loses full row rank. The threshold is
/// `TZ_TOL` times the larger of the largest `||P_K(iω_k)||` and `reference`.
pub fn check_transmission_zeros(points: &[FreqPoint], reference: f64) -> TransmissionZeroReport {
    let scale = points
        .iter()
        .map(|pt| pt.pk.clone().svd(false, false).singular_values.max())
        .fold(reference, f64::max);
    let tolerance = TZ_TOL * scale;
    let margins = points
        .iter()
        .map(|pt| {
            let sigma_min = if pt.pk.nrows() > pt.pk.ncols() {
                0.0
            } else {
                min_singular_value(&pt.pk)
            };
            debug!("omega = {}: sigma_min(P_K) = {sigma_min:.3e}", pt.omega);
            ZeroMargin {
                omega: pt.omega,
                sigma_min,
                pass: sigma_min > tolerance,
            }
        })
        .collect();
    TransmissionZeroReport { tolerance, margins }
}
