//! Acceptance suite. Each test prints one `PASS`/`FAIL` line and then
//! asserts it; run with `--nocapture` to see the lines.

use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use regforge::artifact::ControllerFile;
use regforge::closedloop::{
    assemble_closed_loop, blocking_zeros, certify_stability, robustness_suite, simulate, simulate_exact,
    ClosedLoopSystem, SimOptions, BLOCKING_TOL, TRACKING_TOL,
};
use regforge::config::DesignOptions;
use regforge::controller::assemble_controller;
use regforge::freqdata::{
    build_hk, build_hk_truncated, compute_freq_points, eval_pk_pki_reduced, sylvester_residual, weighted_hs_norm,
    DirectRoute,
};
use regforge::model::{discretize, neumann_eigenbasis, transfer_value, PlantConfig, Profile, StateSpaceModel};
use regforge::numerics::{eigenvalues, solve_care, solve_lyapunov, RealMatrix};
use regforge::pipeline::design;
use regforge::signals::{ExoSignalSpec, Frequencies};
use regforge::Error;

const N_GRID: usize = 50;
const T_FINAL: f64 = 30.0;
const DT: f64 = 1e-3;
const ROUTE_TOL: f64 = 1e-9;
const SYLVESTER_TOL: f64 = 1e-8;
const DECAY_SLACK: f64 = 0.1;
const MIN_ORDER: f64 = 1.8;

fn report(criterion: u32, what: &str, pass: bool, detail: String) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("criterion {criterion:>2} {verdict}  {what}: {detail}");
}

fn plant(n_grid: usize) -> PlantConfig {
    let mut cfg = PlantConfig::heat_default(n_grid);
    cfg.input_weight = [1.0, 1.0];
    cfg.output_weight = [1.0, 1.0];
    cfg.dist_profile_distributed = vec![Profile::Indicator {
        start: 0.2,
        end: 0.5,
        value: 1.0,
    }];
    cfg.dist_profile_boundary = vec![[0.0, 1.0]];
    cfg
}

fn frequencies() -> Frequencies {
    Frequencies::new(vec![0.0, PI, 2.0 * PI]).unwrap()
}

/// `y_ref = cos(πt) + 0.5`, a distributed disturbance at π and a boundary
/// disturbance at 2π.
fn signals() -> ExoSignalSpec {
    ExoSignalSpec {
        frequencies: frequencies(),
        ref_amplitudes: vec![vec![0.5], vec![1.0], vec![0.0]],
        ref_phases: vec![],
        dist_amplitudes: vec![vec![0.0, 0.0], vec![0.5, 0.0], vec![0.0, 0.3]],
        dist_phases: vec![],
    }
}

fn designed(opts: &DesignOptions) -> (StateSpaceModel, ControllerFile, ClosedLoopSystem) {
    let cfg = plant(N_GRID);
    let sys = discretize(&cfg).unwrap();
    let file = design(&cfg, &frequencies(), opts).unwrap_or_else(|e| panic!("design failed: {e}"));
    let cl = assemble_closed_loop(&sys, &file.flattened).unwrap();
    (sys, file, cl)
}

fn max_blocking(cl: &ClosedLoopSystem) -> f64 {
    blocking_zeros(cl, frequencies().values())
        .unwrap()
        .iter()
        .map(|entry| entry.residual)
        .fold(0.0, f64::max)
}

struct Tracking {
    terminal_error: f64,
    decay_rate: f64,
    bound: f64,
}

impl Tracking {
    fn pass(&self) -> bool {
        self.terminal_error <= TRACKING_TOL && self.decay_rate <= self.bound
    }
}

fn tracking(cl: &ClosedLoopSystem) -> Tracking {
    let abscissa = certify_stability(cl).unwrap().abscissa;
    let sim = simulate(cl, &signals(), None, SimOptions::new(T_FINAL, Some(DT))).unwrap();
    Tracking {
        terminal_error: sim.metrics.terminal_error,
        decay_rate: sim.metrics.decay_rate.unwrap_or(f64::INFINITY),
        bound: -abscissa * (1.0 + DECAY_SLACK),
    }
}

fn rel(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

#[test]
fn criterion_01_end_to_end_design() {
    let start = Instant::now();
    let (_, file, _) = designed(&DesignOptions::default());
    let elapsed = start.elapsed().as_secs_f64();
    let c = &file.certificates;
    let pass = c.margin_feedback > 0.0 && c.margin_injection > 0.0 && c.closed_loop_abscissa < 0.0 && elapsed < 30.0;
    report(
        1,
        "design certificates",
        pass,
        format!(
            "margins {:.4} / {:.4}, closed-loop abscissa {:.4e}, {elapsed:.2} s",
            c.margin_feedback, c.margin_injection, c.closed_loop_abscissa
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_02_blocking_zeros() {
    let (_, _, cl) = designed(&DesignOptions::default());
    // The residual is checked at +iω; the closed loop is real, so -iω is
    // the conjugate and checked as well for completeness.
    let mut worst = max_blocking(&cl);
    for &omega in frequencies().values() {
        worst = worst.max(cl.blocking_residual(-omega).unwrap());
    }
    let pass = worst <= BLOCKING_TOL;
    report(2, "blocking zeros at ±iω_k", pass, format!("max relative residual {worst:.3e}"));
    assert!(pass);
}

#[test]
fn criterion_03_tracking() {
    let (_, _, cl) = designed(&DesignOptions::default());
    let t = tracking(&cl);
    let pass = t.pass();
    report(
        3,
        "tracking simulation",
        pass,
        format!(
            "terminal error {:.3e} (<= {TRACKING_TOL:e}), decay rate {:.4} (<= {:.4})",
            t.terminal_error, t.decay_rate, t.bound
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_04_robustness() {
    let (_, file, _) = designed(&DesignOptions::default());
    let entries = robustness_suite(
        &plant(N_GRID),
        &file.flattened,
        &[-0.1, 0.1],
        &signals(),
        SimOptions::new(T_FINAL, Some(DT)),
    );
    let pass = entries.iter().all(|e| e.stable && e.tracking == Some(true));
    let detail = entries
        .iter()
        .map(|e| {
            format!(
                "δ = {:+}: abscissa {:.4}, terminal error {:.3e}",
                e.delta,
                e.abscissa.unwrap_or(f64::NAN),
                e.terminal_error.unwrap_or(f64::NAN)
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    report(4, "conductivity perturbations", pass, detail);
    assert!(pass);
}

#[test]
fn criterion_05_route_equivalence() {
    let (sys, file, _) = designed(&DesignOptions::default());
    let k0 = &file.realization.k0;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = sys.n_state();
    let m = sys.n_input();
    let mut worst: f64 = 0.0;
    for omega in [PI, 2.0 * PI] {
        let direct = DirectRoute::new(&sys, k0, omega).unwrap();
        let reduced = eval_pk_pki_reduced(&sys, k0, omega).unwrap();
        let (pk, _) = direct.values().unwrap();
        worst = worst.max(rel(&pk, &reduced.pk));
        let zero_u = DVector::<Complex64>::zeros(m);
        for _ in 0..10 {
            let psi = DVector::from_fn(n, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
            let probed = direct.probe(&zero_u, &psi).unwrap();
            let expected = &reduced.pki * &psi;
            let err = (&probed - &expected).norm() / expected.norm();
            worst = worst.max(err);
        }
    }
    let pole = matches!(eval_pk_pki_reduced(&sys, k0, 0.0), Err(Error::ResolventPole { .. }));
    let pass = worst <= ROUTE_TOL && pole;
    report(
        5,
        "direct and reduced routes",
        pass,
        format!("max relative disagreement {worst:.3e}, pole at ω = 0 reported: {pole}"),
    );
    assert!(pass);
}

/// Solves `G1 H - H A_K = F` from scratch through `vec(G1 H - H A_K) =
/// (I ⊗ G1 - A_K^T ⊗ I) vec(H)`.
fn kronecker_hk(g1: &RealMatrix, ak: &RealMatrix, forcing: &RealMatrix) -> RealMatrix {
    let (r, s) = (g1.nrows(), ak.nrows());
    let mut system = DMatrix::<f64>::zeros(r * s, r * s);
    for j in 0..s {
        for i in 0..r {
            let row = j * r + i;
            for k in 0..r {
                system[(row, j * r + k)] += g1[(i, k)];
            }
            for l in 0..s {
                system[(row, l * r + i)] -= ak[(l, j)];
            }
        }
    }
    let rhs = DVector::from_column_slice(forcing.as_slice());
    let x = system.lu().solve(&rhs).expect("Kronecker system is regular");
    RealMatrix::from_column_slice(r, s, x.as_slice())
}

#[test]
fn criterion_06_sylvester_oracle() {
    let (sys, file, _) = designed(&DesignOptions::default());
    let ctrl = &file.realization;
    let points = compute_freq_points(&sys, &ctrl.k0, &frequencies()).unwrap();
    let hk = build_hk(&points).unwrap();
    let residual = sylvester_residual(&hk, &ctrl.internal_model, &sys, &ctrl.k0);
    let ak = &sys.a + &sys.b * &ctrl.k0;
    let forcing = &ctrl.internal_model.g2 * (&sys.c + &sys.d * &ctrl.k0);
    let oracle = kronecker_hk(&ctrl.internal_model.g1, &ak, &forcing);
    let distance = (&hk - &oracle).norm() / oracle.norm();
    let pass = residual <= SYLVESTER_TOL && distance <= SYLVESTER_TOL;
    report(
        6,
        "Sylvester oracle",
        pass,
        format!("relative residual {residual:.3e}, distance to Kronecker solution {distance:.3e}"),
    );
    assert!(pass);
}

#[test]
fn criterion_07_truncation() {
    let cfg = plant(N_GRID);
    let (sys, file, _) = designed(&DesignOptions::default());
    let k0 = &file.realization.k0;
    let hk = &file.realization.hk;
    let errors: Vec<f64> = [5, 10, 20, 50]
        .iter()
        .map(|&count| {
            let basis = neumann_eigenbasis(&cfg, count).unwrap();
            let hk_n = build_hk_truncated(&sys, k0, &frequencies(), &basis).unwrap();
            weighted_hs_norm(&(&hk_n - hk), &sys.weights)
        })
        .collect();
    // Rounding noise is allowed once the error has reached the floor.
    let monotone = errors.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9) + 1e-12);

    let opts = DesignOptions {
        truncation: Some(20),
        ..Default::default()
    };
    let (_, file20, cl20) = designed(&opts);
    let c = &file20.certificates;
    let certified = c.margin_feedback > 0.0 && c.margin_injection > 0.0 && c.closed_loop_abscissa < 0.0;
    let blocking = max_blocking(&cl20);
    let t = tracking(&cl20);
    let pass = monotone && certified && blocking <= BLOCKING_TOL && t.pass();
    report(
        7,
        "truncated HK",
        pass,
        format!(
            "errors {errors:?}; N = 20 design: abscissa {:.4e}, blocking {blocking:.3e}, \
             terminal error {:.3e}, decay rate {:.4} (<= {:.4})",
            c.closed_loop_abscissa, t.terminal_error, t.decay_rate, t.bound
        ),
    );
    assert!(pass);
}

fn perturbed(m: &RealMatrix, size: f64, rng: &mut ChaCha8Rng) -> RealMatrix {
    let noise = RealMatrix::from_fn(m.nrows(), m.ncols(), |_, _| rng.gen_range(-1.0..1.0));
    let scale = size * m.norm() / noise.norm();
    m + noise * scale
}

#[test]
fn criterion_08_gain_perturbation() {
    let (sys, file, _) = designed(&DesignOptions::default());
    let ctrl = &file.realization;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst_abscissa = f64::NEG_INFINITY;
    let mut worst_blocking: f64 = 0.0;
    for _ in 0..5 {
        let k1 = perturbed(&ctrl.k1, 1e-6, &mut rng);
        let hk = perturbed(&ctrl.hk, 1e-6, &mut rng);
        let shaken =
            assemble_controller(ctrl.internal_model.clone(), ctrl.l.clone(), ctrl.k0.clone(), k1, hk, &sys).unwrap();
        let cl = assemble_closed_loop(&sys, &shaken.flatten()).unwrap();
        worst_abscissa = worst_abscissa.max(certify_stability(&cl).unwrap().abscissa);
        worst_blocking = worst_blocking.max(max_blocking(&cl));
    }
    let stable = certify_stability(&assemble_closed_loop(&sys, &file.flattened).unwrap()).unwrap().pass
        && worst_abscissa < 0.0;
    let pass = stable && worst_blocking <= BLOCKING_TOL;
    report(
        8,
        "perturbed K1 and HK",
        pass,
        format!("worst abscissa {worst_abscissa:.4e}, worst blocking residual {worst_blocking:.3e}"),
    );
    assert!(pass);
}

#[test]
fn criterion_09_numerics_oracles() {
    let one = |v: f64| RealMatrix::from_element(1, 1, v);
    let care = solve_care(&one(-1.0), &one(1.0), &one(1.0), &one(1.0)).unwrap();
    let care_err = (care.x[(0, 0)] - (2f64.sqrt() - 1.0)).abs();
    let lyap = solve_lyapunov(&one(-1.0), &one(2.0)).unwrap();
    let lyap_err = (lyap[(0, 0)] - 1.0).abs();

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst_pair: f64 = 0.0;
    for trial in 0..20 {
        let n = 3 + trial % 10;
        let m = RealMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let eigs = eigenvalues(&m).unwrap();
        let scale = m.norm().max(1.0);
        for z in &eigs {
            let nearest = eigs.iter().map(|w| (w - z.conj()).norm()).fold(f64::INFINITY, f64::min);
            worst_pair = worst_pair.max(nearest / scale);
        }
    }
    let pass = care_err <= 1e-10 && lyap_err <= 1e-12 && worst_pair <= 1e-9;
    report(
        9,
        "numerics oracles",
        pass,
        format!("CARE error {care_err:.2e}, Lyapunov error {lyap_err:.2e}, conjugate closure {worst_pair:.2e}"),
    );
    assert!(pass);
}

/// Order `p` with `(h1^p - h2^p) / (h2^p - h3^p) = ratio`, by bisection.
fn observed_order(h: [f64; 3], ratio: f64) -> f64 {
    let f = |p: f64| (h[0].powf(p) - h[1].powf(p)) / (h[1].powf(p) - h[2].powf(p)) - ratio;
    let (mut lo, mut hi) = (0.1, 8.0);
    if f(lo) * f(hi) > 0.0 {
        return f64::NAN;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(lo) * f(mid) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn criterion_10_convergence_orders() {
    let lambda = Complex64::new(0.0, PI);
    let grids = [25, 50, 100];
    let values: Vec<Complex64> = grids
        .iter()
        .map(|&n| transfer_value(&discretize(&plant(n)).unwrap(), lambda).unwrap().0[(0, 0)])
        .collect();
    let steps = grids.map(|n| plant(n).step());
    let ratio = (values[0] - values[1]).norm() / (values[1] - values[2]).norm();
    let space_order = observed_order(steps, ratio);

    let (_, _, cl) = designed(&DesignOptions::default());
    let horizon = 1.0;
    let reference = simulate_exact(&cl, &signals(), None, SimOptions::new(horizon, Some(DT))).unwrap();
    let errors: Vec<f64> = [0.02, 0.01, 0.005]
        .iter()
        .map(|&dt| {
            let sim = simulate(&cl, &signals(), None, SimOptions::new(horizon, Some(dt))).unwrap();
            (sim.final_state - &reference.final_state).norm()
        })
        .collect();
    let time_orders: Vec<f64> = errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let time_order = time_orders.iter().copied().fold(f64::INFINITY, f64::min);
    let pass = space_order >= MIN_ORDER && time_order >= MIN_ORDER;
    report(
        10,
        "grid and time-step convergence",
        pass,
        format!("spatial order {space_order:.3}, Crank-Nicolson orders {time_orders:.3?}"),
    );
    assert!(pass);
}
