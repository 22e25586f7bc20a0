//! LQR state feedback `K0`, output injection `L` and their certificates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::StateSpaceModel;
use crate::numerics::{eigenvalues, min_singular_value, solve_care, spectral_abscissa, to_complex, ComplexMatrix, RealMatrix};

pub use crate::numerics::is_hurwitz;

/// Relative rank threshold of the Hautus test.
pub const HAUTUS_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LqrWeights {
    pub q: f64,
    pub r: f64,
}

impl Default for LqrWeights {
    fn default() -> Self {
        Self { q: 1.0, r: 1.0 }
    }
}

impl LqrWeights {
    pub fn validate(&self, what: &str) -> Result<()> {
        if !(self.q >= 0.0 && self.q.is_finite() && self.r > 0.0 && self.r.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "{what} weights need q >= 0 and r > 0, got q = {}, r = {}",
                self.q, self.r
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilizingGains {
    #[serde(with = "crate::dense::real")]
    pub k0: RealMatrix,
    #[serde(with = "crate::dense::real")]
    pub l: RealMatrix,
    /// `-max Re spec(A + B K0)`.
    pub margin_feedback: f64,
    /// `-max Re spec(A + L C)`.
    pub margin_injection: f64,
}

/// `K0 = -R^{-1} B^T X` with the state cost weighted by the quadrature
/// weights, so that it approximates `q ∫ |x|^2`.
pub fn design_k0(sys: &StateSpaceModel, weights: LqrWeights) -> Result<RealMatrix> {
    weights.validate("feedback")?;
    let q = sys.weight_matrix() * weights.q;
    let r = RealMatrix::identity(sys.n_input(), sys.n_input()) * weights.r;
    Ok(solve_care(&sys.a, &sys.b, &q, &r)?.gain)
}

/// `L = -Y C^T R^{-1}` from the dual Riccati equation on `(A^T, C^T)`.
///
/// The state weight is `q W^{-1}`, which makes `L` the weighted adjoint of
/// the feedback gain designed for the dual system.
pub fn design_l(sys: &StateSpaceModel, weights: LqrWeights) -> Result<RealMatrix> {
    weights.validate("injection")?;
    let q = RealMatrix::from_diagonal(&sys.weights.map(|w| weights.q / w));
    let r = RealMatrix::identity(sys.n_output(), sys.n_output()) * weights.r;
    let dual = solve_care(&sys.a.transpose(), &sys.c.transpose(), &q, &r).map_err(|e| match e {
        Error::NotStabilizable(msg) => Error::NotDetectable(msg),
        other => other,
    })?;
    Ok(dual.gain.transpose())
}

pub fn stabilize(sys: &StateSpaceModel, feedback: LqrWeights, injection: LqrWeights) -> Result<StabilizingGains> {
    let k0 = design_k0(sys, feedback)?;
    let l = design_l(sys, injection)?;
    let margin_feedback = -spectral_abscissa(&(&sys.a + &sys.b * &k0))?;
    let margin_injection = -spectral_abscissa(&(&sys.a + &l * &sys.c))?;
    if !(margin_feedback > 0.0) {
        return Err(Error::NotStabilizable(format!(
            "A + B K0 has abscissa {:.3e}",
            -margin_feedback
        )));
    }
    if !(margin_injection > 0.0) {
        return Err(Error::NotDetectable(format!(
            "A + L C has abscissa {:.3e}",
            -margin_injection
        )));
    }
    Ok(StabilizingGains {
        k0,
        l,
        margin_feedback,
        margin_injection,
    })
}

/// Samples of the kernel `k0` with `K0 x = -∫ x k0`, one row per input.
pub fn feedback_kernel(sys: &StateSpaceModel, k0: &RealMatrix) -> RealMatrix {
    let mut kernel = -k0.clone();
    for (mut col, w) in kernel.column_iter_mut().zip(sys.weights.iter()) {
        col /= *w;
    }
    kernel
}

/// Hautus test: `[λ - G1, B1]` has full row rank at every eigenvalue of `G1`.
pub fn hautus_controllable(g1: &RealMatrix, b1: &RealMatrix) -> Result<bool> {
    let n = g1.nrows();
    if !g1.is_square() || b1.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "Hautus test: G1 {:?}, B1 {:?}",
            g1.shape(),
            b1.shape()
        )));
    }
    if n == 0 {
        return Ok(true);
    }
    let scale = g1.norm().max(b1.norm()).max(f64::MIN_POSITIVE);
    let gc = to_complex(g1);
    let bc = to_complex(b1);
    for lambda in eigenvalues(g1)? {
        let mut pencil = ComplexMatrix::zeros(n, n + b1.ncols());
        pencil
            .view_mut((0, 0), (n, n))
            .copy_from(&(ComplexMatrix::identity(n, n) * lambda - &gc));
        pencil.view_mut((0, n), (n, b1.ncols())).copy_from(&bc);
        if min_singular_value(&pencil) <= HAUTUS_TOL * scale {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{discretize, PlantConfig};
    use crate::numerics::RealVector;

    fn one(v: f64) -> RealMatrix {
        RealMatrix::from_element(1, 1, v)
    }

    fn scalar_sys(a: f64) -> StateSpaceModel {
        StateSpaceModel::simple(one(a), one(1.0), one(1.0), one(0.0)).unwrap()
    }

    #[test]
    fn scalar_gains() {
        let sys = scalar_sys(-1.0);
        let expect = -(2f64.sqrt() - 1.0);
        let k0 = design_k0(&sys, LqrWeights::default()).unwrap();
        let l = design_l(&sys, LqrWeights::default()).unwrap();
        assert!((k0[(0, 0)] - expect).abs() < 1e-10);
        assert!((l[(0, 0)] - expect).abs() < 1e-10);
    }

    #[test]
    fn zero_state_weight_on_stable_plant() {
        let sys = scalar_sys(-1.0);
        let w = LqrWeights { q: 0.0, r: 1.0 };
        assert!(design_k0(&sys, w).unwrap()[(0, 0)].abs() < 1e-12);
        assert!(design_l(&sys, w).unwrap()[(0, 0)].abs() < 1e-12);
    }

    #[test]
    fn heat_plant_margins() {
        let sys = discretize(&PlantConfig::heat_default(50)).unwrap();
        let gains = stabilize(&sys, LqrWeights::default(), LqrWeights::default()).unwrap();
        assert!(gains.margin_feedback > 0.0);
        assert!(gains.margin_injection > 0.0);
        let kernel = feedback_kernel(&sys, &gains.k0);
        let recovered = -(kernel.component_mul(&sys.weights.transpose()));
        assert!((recovered - &gains.k0).amax() < 1e-12);
    }

    #[test]
    fn injection_is_weighted_adjoint_of_dual_feedback() {
        let mut cfg = PlantConfig::heat_default(20);
        cfg.conductivity = crate::model::Profile::Polynomial(vec![1.0, 0.5]);
        cfg.output_weight = [0.3, 1.0];
        let sys = discretize(&cfg).unwrap();
        let w = RealMatrix::from_diagonal(&sys.weights);
        let w_inv = RealMatrix::from_diagonal(&sys.weights.map(|x| 1.0 / x));
        let dual = StateSpaceModel::new(
            &w_inv * sys.a.transpose() * &w,
            &w_inv * sys.c.transpose(),
            RealMatrix::zeros(20, 0),
            sys.b.transpose(),
            RealMatrix::zeros(1, 1),
            RealMatrix::zeros(1, 0),
            sys.weights.clone(),
        )
        .unwrap();
        let k_dual = design_k0(&dual, LqrWeights::default()).unwrap();
        let adjoint = &w_inv * k_dual.transpose();
        let l = design_l(&sys, LqrWeights::default()).unwrap();
        assert!((&adjoint - &l).norm() <= 1e-9 * l.norm());
    }

    #[test]
    fn undetectable_plant() {
        // Unstable mode invisible in the output.
        let a = RealMatrix::from_diagonal(&RealVector::from_vec(vec![1.0, -1.0]));
        let sys = StateSpaceModel::simple(
            a,
            RealMatrix::from_column_slice(2, 1, &[1.0, 1.0]),
            RealMatrix::from_row_slice(1, 2, &[0.0, 1.0]),
            one(0.0),
        )
        .unwrap();
        assert!(matches!(
            design_l(&sys, LqrWeights::default()),
            Err(Error::NotDetectable(_))
        ));
    }

    #[test]
    fn hurwitz_examples() {
        assert_eq!(is_hurwitz(&one(-1.0)).unwrap(), (true, -1.0));
        let im = crate::internal_model::build_internal_model(
            &crate::signals::Frequencies::new(vec![0.0, 1.0]).unwrap(),
            1,
        )
        .unwrap();
        let (ok, abscissa) = is_hurwitz(&im.g1).unwrap();
        assert!(!ok && abscissa.abs() < 1e-14);
        let (ok, abscissa) = is_hurwitz(&RealMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -1.0])).unwrap();
        assert!(ok && (abscissa + 0.5).abs() < 1e-14);
    }

    #[test]
    fn hautus_examples() {
        assert!(hautus_controllable(&one(0.0), &one(1.0)).unwrap());
        assert!(!hautus_controllable(&one(0.0), &one(0.0)).unwrap());
        // B1 whose block at omega = 1 vanishes, as when P_K(i) = 0.
        let im = crate::internal_model::build_internal_model(
            &crate::signals::Frequencies::new(vec![0.0, 1.0]).unwrap(),
            1,
        )
        .unwrap();
        let b1 = RealMatrix::from_column_slice(3, 1, &[0.7, 0.0, 0.0]);
        assert!(!hautus_controllable(&im.g1, &b1).unwrap());
        let b1 = RealMatrix::from_column_slice(3, 1, &[0.7, 0.5, 0.5]);
        assert!(hautus_controllable(&im.g1, &b1).unwrap());
    }
}
