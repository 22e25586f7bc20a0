//! Internal-model gain `K1` and the assembled error-feedback controller
//!
//! ```text
//! z1' = G1 z1 + G2 e
//! x̂'  = A x̂ + B u + L (ŷ - e),   ŷ = C x̂ + D u
//! u   = K1 z1 + K2 x̂,            K2 = K0 + K1 HK
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::internal_model::InternalModel;
use crate::model::StateSpaceModel;
use crate::numerics::{block, solve_care, spectral_abscissa, RealMatrix, RealVector};
use crate::stabilization::LqrWeights;

/// `K1 = -R^{-1} B1^T X` for the pair `(G1, B1)` with identity-scaled
/// weights, together with the abscissa of `G1 + B1 K1`.
pub fn design_k1(g1: &RealMatrix, b1: &RealMatrix, weights: LqrWeights) -> Result<(RealMatrix, f64)> {
    weights.validate("internal model")?;
    let dim = g1.nrows();
    let m = b1.ncols();
    let q = RealMatrix::identity(dim, dim) * weights.q;
    let r = RealMatrix::identity(m, m) * weights.r;
    let k1 = solve_care(g1, b1, &q, &r)?.gain;
    let abscissa = spectral_abscissa(&(g1 + b1 * &k1))?;
    if !(abscissa < 0.0) {
        return Err(Error::NotStabilizable(format!(
            "G1 + B1 K1 has abscissa {abscissa:.3e}"
        )));
    }
    Ok((k1, abscissa))
}

/// Plant matrices used inside the observer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObserverModel {
    #[serde(with = "crate::dense::real")]
    pub a: RealMatrix,
    #[serde(with = "crate::dense::real")]
    pub b: RealMatrix,
    #[serde(with = "crate::dense::real")]
    pub c: RealMatrix,
    #[serde(with = "crate::dense::real")]
    pub d: RealMatrix,
}

impl From<&StateSpaceModel> for ObserverModel {
    fn from(sys: &StateSpaceModel) -> Self {
        Self {
            a: sys.a.clone(),
            b: sys.b.clone(),
            c: sys.c.clone(),
            d: sys.d.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControllerRealization {
    pub internal_model: InternalModel,
    #[serde(with = "crate::dense::real")]
    pub k0: RealMatrix,
    #[serde(with = "crate::dense::real")]
    pub l: RealMatrix,
    #[serde(with = "crate::dense::real")]
    pub k1: RealMatrix,
    #[serde(with = "crate::dense::real")]
    pub k2: RealMatrix,
    #[serde(with = "crate::dense::real")]
    pub hk: RealMatrix,
    pub observer: ObserverModel,
}

/// The controller as one system with state `(z1, x̂)`, input `e` and
/// output `u`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlatController {
    #[serde(with = "crate::dense::real")]
    pub generator: RealMatrix,
    #[serde(with = "crate::dense::real")]
    pub input: RealMatrix,
    #[serde(with = "crate::dense::real")]
    pub output: RealMatrix,
}

impl FlatController {
    pub fn n_state(&self) -> usize {
        self.generator.nrows()
    }

    pub fn zeroed_like(&self) -> Self {
        Self {
            generator: RealMatrix::zeros(self.generator.nrows(), self.generator.ncols()),
            input: RealMatrix::zeros(self.input.nrows(), self.input.ncols()),
            output: RealMatrix::zeros(self.output.nrows(), self.output.ncols()),
        }
    }
}

pub fn assemble_controller(
    internal_model: InternalModel,
    l: RealMatrix,
    k0: RealMatrix,
    k1: RealMatrix,
    hk: RealMatrix,
    plant: &StateSpaceModel,
) -> Result<ControllerRealization> {
    if k1.ncols() != hk.nrows() || k0.shape() != (k1.nrows(), hk.ncols()) {
        return Err(Error::DimensionMismatch(format!(
            "K0 {:?}, K1 {:?}, HK {:?}",
            k0.shape(),
            k1.shape(),
            hk.shape()
        )));
    }
    let ctrl = ControllerRealization {
        k2: &k0 + &k1 * &hk,
        internal_model,
        k0,
        l,
        k1,
        hk,
        observer: ObserverModel::from(plant),
    };
    ctrl.check_dimensions()?;
    Ok(ctrl)
}

impl ControllerRealization {
    pub fn n_state(&self) -> usize {
        self.observer.a.nrows()
    }

    pub fn n_input(&self) -> usize {
        self.observer.b.ncols()
    }

    pub fn n_output(&self) -> usize {
        self.observer.c.nrows()
    }

    pub fn check_dimensions(&self) -> Result<()> {
        let n = self.n_state();
        let (m, p) = (self.n_input(), self.n_output());
        let dim = self.internal_model.dim();
        let o = &self.observer;
        let ok = o.a.shape() == (n, n)
            && o.b.nrows() == n
            && o.c.ncols() == n
            && o.d.shape() == (p, m)
            && self.internal_model.p == p
            && self.k0.shape() == (m, n)
            && self.l.shape() == (n, p)
            && self.k1.shape() == (m, dim)
            && self.k2.shape() == (m, n)
            && self.hk.shape() == (dim, n);
        if ok {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!(
                "controller parts: A {:?}, B {:?}, C {:?}, D {:?}, G1 {:?}, K0 {:?}, L {:?}, K1 {:?}, K2 {:?}, HK {:?}",
                o.a.shape(),
                o.b.shape(),
                o.c.shape(),
                o.d.shape(),
                self.internal_model.g1.shape(),
                self.k0.shape(),
                self.l.shape(),
                self.k1.shape(),
                self.k2.shape(),
                self.hk.shape()
            )))
        }
    }

    /// `[[G1, 0], [(B + L D) K1, A + L C + (B + L D) K2]]`, `[G2; -L]` and
    /// `[K1, K2]`.
    pub fn flatten(&self) -> FlatController {
        let o = &self.observer;
        let im = &self.internal_model;
        let n = self.n_state();
        let b_obs = &o.b + &self.l * &o.d;
        let generator = block(&[
            &[&im.g1, &RealMatrix::zeros(im.dim(), n)],
            &[&(&b_obs * &self.k1), &(&o.a + &self.l * &o.c + &b_obs * &self.k2)],
        ]);
        let input = block(&[&[&im.g2], &[&(-&self.l)]]);
        let output = block(&[&[&self.k1, &self.k2]]);
        FlatController {
            generator,
            input,
            output,
        }
    }

    /// `u = K1 z1 + K2 x̂`.
    pub fn output(&self, z1: &RealVector, x_hat: &RealVector) -> RealVector {
        &self.k1 * z1 + &self.k2 * x_hat
    }

    /// Right-hand side of the observer equation written term by term.
    pub fn observer_rhs(&self, z1: &RealVector, x_hat: &RealVector, e: &RealVector) -> RealVector {
        let o = &self.observer;
        let u = self.output(z1, x_hat);
        let y_hat = &o.c * x_hat + &o.d * &u;
        &o.a * x_hat + &o.b * &u + &self.l * (y_hat - e)
    }

    /// `K2 - (K0 + K1 HK)`, zero for an untouched controller.
    pub fn assembly_defect(&self) -> f64 {
        (&self.k2 - (&self.k0 + &self.k1 * &self.hk)).amax()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::internal_model::build_internal_model;
    use crate::numerics::eigenvalues;
    use crate::signals::Frequencies;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn one(v: f64) -> RealMatrix {
        RealMatrix::from_element(1, 1, v)
    }

    #[test]
    fn scalar_k1() {
        let (k1, abscissa) = design_k1(&one(0.0), &one(1.0), LqrWeights::default()).unwrap();
        assert!((k1[(0, 0)] + 1.0).abs() < 1e-10);
        assert!((abscissa + 1.0).abs() < 1e-10);
    }

    #[test]
    fn zero_b1_cannot_be_stabilized() {
        let res = design_k1(&one(0.0), &one(0.0), LqrWeights::default());
        assert!(matches!(res, Err(Error::NotStabilizable(_))));
    }

    #[test]
    fn oscillator_internal_model() {
        let im = build_internal_model(&Frequencies::new(vec![0.0, std::f64::consts::PI]).unwrap(), 1).unwrap();
        let b1 = RealMatrix::from_column_slice(3, 1, &[0.4, 0.2, -0.3]);
        let (_, abscissa) = design_k1(&im.g1, &b1, LqrWeights::default()).unwrap();
        assert!(abscissa < 0.0);
    }

    fn random_controller(rng: &mut ChaCha8Rng) -> ControllerRealization {
        let n = 6;
        let mut r = |rows, cols| RealMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0));
        let plant = StateSpaceModel::simple(r(n, n), r(n, 1), r(1, n), r(1, 1)).unwrap();
        let im = build_internal_model(&Frequencies::new(vec![0.0, 1.0, 3.0]).unwrap(), 1).unwrap();
        assemble_controller(im, r(n, 1), r(1, n), r(1, 5), r(5, n), &plant).unwrap()
    }

    #[test]
    fn assembly_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ctrl = random_controller(&mut rng);
        assert_eq!(ctrl.assembly_defect(), 0.0);
        let flat = ctrl.flatten();
        let z1 = RealVector::from_fn(5, |_, _| rng.gen_range(-1.0..1.0));
        let x_hat = RealVector::from_fn(6, |_, _| rng.gen_range(-1.0..1.0));
        let e = RealVector::from_element(1, 0.37);
        let state = RealVector::from_iterator(11, z1.iter().chain(x_hat.iter()).copied());
        let rhs = &flat.generator * &state + &flat.input * &e;
        let expect_z = &ctrl.internal_model.g1 * &z1 + &ctrl.internal_model.g2 * &e;
        let expect_x = ctrl.observer_rhs(&z1, &x_hat, &e);
        let scale = rhs.norm();
        assert!((rhs.rows(0, 5) - expect_z).norm() <= 1e-14 * scale);
        assert!((rhs.rows(5, 6) - expect_x).norm() <= 1e-14 * scale);
        assert!((&flat.output * &state - ctrl.output(&z1, &x_hat)).norm() <= 1e-14 * scale);
    }

    #[test]
    fn equilibrium_at_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let flat = random_controller(&mut rng).flatten();
        let zero = RealVector::zeros(flat.n_state());
        assert_eq!(&flat.output * &zero, RealVector::zeros(1));
        assert_eq!(&flat.generator * &zero + &flat.input * RealVector::zeros(1), zero);
    }

    #[test]
    fn generator_contains_internal_model_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ctrl = random_controller(&mut rng);
        let spectrum = eigenvalues(&ctrl.flatten().generator).unwrap();
        for w in [0.0, 1.0, -1.0, 3.0, -3.0] {
            let target = Complex64::new(0.0, w);
            let closest = spectrum.iter().map(|z| (z - target).norm()).fold(f64::INFINITY, f64::min);
            assert!(closest < 1e-12, "omega {w}: {closest}");
        }
    }

    #[test]
    fn dimension_errors() {
        let plant = StateSpaceModel::simple(one(-1.0), one(1.0), one(1.0), one(0.0)).unwrap();
        let im = build_internal_model(&Frequencies::constant(), 1).unwrap();
        let res = assemble_controller(im, one(1.0), one(1.0), RealMatrix::zeros(1, 2), RealMatrix::zeros(2, 1), &plant);
        assert!(matches!(res, Err(Error::DimensionMismatch(_))));
    }
}
