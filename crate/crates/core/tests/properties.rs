use std::f64::consts::TAU;

use num_complex::Complex64;
use proptest::prelude::*;

use regforge::internal_model::build_internal_model;
use regforge::model::{discretize, transfer_value, PlantConfig, Profile};
use regforge::numerics::{eigenvalues, RealMatrix, RealVector};
use regforge::signals::{ExoSignalSpec, Frequencies};

fn plant_strategy() -> impl Strategy<Value = PlantConfig> {
    (
        prop::collection::vec(0.2f64..3.0, 2..5),
        -2.0f64..0.5,
        (-1.0f64..1.0, 0.1f64..1.0),
        (0.1f64..1.0, -1.0f64..1.0),
        10usize..30,
    )
        .prop_map(|(cond, reaction, input, output, n_grid)| {
            let mut cfg = PlantConfig::heat_default(n_grid);
            cfg.conductivity = Profile::Samples(cond);
            cfg.reaction = Profile::Constant(reaction);
            cfg.input_weight = [input.0, input.1];
            cfg.output_weight = [output.0, output.1];
            cfg
        })
}

fn frequencies_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.1f64..5.0, 0..4).prop_map(|steps| {
        let mut acc = 0.0;
        let mut out = vec![0.0];
        for s in steps {
            acc += s;
            out.push(acc);
        }
        out
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn transfer_function_is_conjugate_symmetric(cfg in plant_strategy(), re in 0.5f64..3.0, im in -20.0f64..20.0) {
        let sys = discretize(&cfg).unwrap();
        let lambda = Complex64::new(re, im);
        let (p, _) = transfer_value(&sys, lambda).unwrap();
        let (q, _) = transfer_value(&sys, lambda.conj()).unwrap();
        let diff = (p.map(|z| z.conj()) - &q).norm();
        prop_assert!(diff <= 1e-10 * (1.0 + q.norm()));
    }

    #[test]
    fn pure_diffusion_is_dissipative(cfg in plant_strategy(), seed in prop::collection::vec(-1.0f64..1.0, 30)) {
        let mut cfg = cfg;
        cfg.reaction = Profile::Constant(0.0);
        let sys = discretize(&cfg).unwrap();
        let x = RealVector::from_iterator(sys.n_state(), seed.iter().copied().cycle().take(sys.n_state()));
        let energy = sys.inner(&x, &(&sys.a * &x));
        prop_assert!(energy <= 1e-10 * sys.inner(&x, &x).max(1.0) * sys.a.norm());
    }

    #[test]
    fn eigenvalues_come_in_conjugate_pairs(n in 2usize..12, entries in prop::collection::vec(-2.0f64..2.0, 144)) {
        let m = RealMatrix::from_fn(n, n, |i, j| entries[i * 12 + j]);
        let eigs = eigenvalues(&m).unwrap();
        prop_assert_eq!(eigs.len(), n);
        let scale = m.norm().max(1.0);
        for z in &eigs {
            let nearest = eigs.iter().map(|w| (w - z.conj()).norm()).fold(f64::INFINITY, f64::min);
            prop_assert!(nearest <= 1e-9 * scale);
        }
        let trace: f64 = eigs.iter().map(|z| z.re).sum();
        prop_assert!((trace - m.trace()).abs() <= 1e-9 * scale * n as f64);
    }

    #[test]
    fn increasing_lists_from_zero_are_accepted(values in frequencies_strategy()) {
        let freqs = Frequencies::new(values.clone()).unwrap();
        prop_assert_eq!(freqs.q(), values.len() - 1);
        let im = build_internal_model(&freqs, 1).unwrap();
        prop_assert_eq!(im.dim(), 2 * values.len() - 1);
        let (stable, abscissa) = regforge::numerics::is_hurwitz(&im.g1).unwrap();
        prop_assert!(!stable && abscissa.abs() <= 1e-12);
    }

    #[test]
    fn malformed_lists_are_rejected(values in frequencies_strategy(), at in 0usize..8, shift in 0.5f64..2.0) {
        let mut dup = values.clone();
        let k = at % dup.len();
        dup.insert(k, dup[k]);
        prop_assert!(Frequencies::new(dup).is_err());
        let moved: Vec<f64> = values.iter().map(|w| w + shift).collect();
        prop_assert!(Frequencies::new(moved).is_err());
        let mut reversed = values.clone();
        reversed.reverse();
        if values.len() > 1 {
            prop_assert!(Frequencies::new(reversed).is_err());
        }
    }

    #[test]
    fn signals_are_bounded_and_periodic(
        omega in 0.2f64..6.0,
        amps in prop::collection::vec(-2.0f64..2.0, 3),
        phases in prop::collection::vec(0.0f64..TAU, 2),
        t in 0.0f64..50.0,
    ) {
        let spec = ExoSignalSpec {
            frequencies: Frequencies::new(vec![0.0, omega, 2.0 * omega]).unwrap(),
            ref_amplitudes: amps.iter().map(|a| vec![*a]).collect(),
            ref_phases: vec![0.0, phases[0], phases[1]],
            dist_amplitudes: vec![],
            dist_phases: vec![],
        };
        spec.validate(1, 0).unwrap();
        let y = spec.eval_ref(t);
        prop_assert!(y.norm() <= spec.ref_bound() + 1e-12);
        let later = spec.eval_ref(t + TAU / omega);
        prop_assert!((later - &y).norm() <= 1e-9 * (1.0 + spec.ref_bound()));
    }
}
