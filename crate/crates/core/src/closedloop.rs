//! Plant and controller in feedback: assembly, stability certificate,
//! blocking zeros, time simulation and robustness sweeps.
//!
//! The closed-loop state is `(x, z1, x̂)` and the exogenous input is
//! `w_e = (w_dist, y_ref)`:
//!
//! ```text
//! A_e = [[A, B K], [G2c C, G1c + G2c D K]]     B_e = [[B_d, 0], [G2c D_d, -G2c]]
//! C_e = [C, D K]                               D_e = [D_d, -I]
//! ```
//!
//! where `(G1c, G2c, K)` is the flattened controller.

use log::{debug, warn};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controller::FlatController;
use crate::error::{Error, Result};
use crate::model::{discretize, PlantConfig, StateSpaceModel};
use crate::numerics::{block, matrix_exponential, norm1, spectral_abscissa, to_complex, ComplexMatrix, LuSolver, RealMatrix, RealVector, EXPM_CAP};
use crate::signals::ExoSignalSpec;

/// Stability is certified when the abscissa is at most `-STAB_FLOOR`.
pub const STAB_FLOOR: f64 = 1e-6;
/// Relative size allowed of the error transfer at a design frequency.
pub const BLOCKING_TOL: f64 = 1e-8;
/// Bound on the steady tracking error over the final window.
pub const TRACKING_TOL: f64 = 1e-3;
/// Fraction of the horizon used for the terminal error.
pub const FINAL_WINDOW: f64 = 0.2;
/// Default step as a fraction of the horizon.
pub const DEFAULT_DT_FRACTION: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct ClosedLoopSystem {
    pub a_e: RealMatrix,
    pub b_e: RealMatrix,
    pub c_e: RealMatrix,
    pub d_e: RealMatrix,
    /// Maps the closed-loop state to `u`.
    pub c_u: RealMatrix,
    pub n_plant: usize,
    pub n_controller: usize,
    pub n_dist: usize,
    pub n_output: usize,
}

pub fn assemble_closed_loop(plant: &StateSpaceModel, ctrl: &FlatController) -> Result<ClosedLoopSystem> {
    let (n, m, p, nd) = (plant.n_state(), plant.n_input(), plant.n_output(), plant.n_dist());
    let nc = ctrl.generator.nrows();
    if !ctrl.generator.is_square() || ctrl.input.shape() != (nc, p) || ctrl.output.shape() != (m, nc) {
        return Err(Error::DimensionMismatch(format!(
            "controller generator {:?}, input {:?}, output {:?} for a plant with m = {m}, p = {p}",
            ctrl.generator.shape(),
            ctrl.input.shape(),
            ctrl.output.shape()
        )));
    }
    let (g1, g2, k) = (&ctrl.generator, &ctrl.input, &ctrl.output);
    let dk = &plant.d * k;
    let a_e = block(&[&[&plant.a, &(&plant.b * k)], &[&(g2 * &plant.c), &(g1 + g2 * &dk)]]);
    let b_e = block(&[
        &[&plant.bd, &RealMatrix::zeros(n, p)],
        &[&(g2 * &plant.dd), &(-g2)],
    ]);
    let c_e = block(&[&[&plant.c, &dk]]);
    let d_e = block(&[&[&plant.dd, &(-RealMatrix::identity(p, p))]]);
    let c_u = block(&[&[&RealMatrix::zeros(m, n), k]]);
    Ok(ClosedLoopSystem {
        a_e,
        b_e,
        c_e,
        d_e,
        c_u,
        n_plant: n,
        n_controller: nc,
        n_dist: nd,
        n_output: p,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityCertificate {
    pub abscissa: f64,
    pub pass: bool,
}

pub fn certify_stability(cl: &ClosedLoopSystem) -> Result<StabilityCertificate> {
    let abscissa = spectral_abscissa(&cl.a_e)?;
    Ok(StabilityCertificate {
        abscissa,
        pass: abscissa <= -STAB_FLOOR,
    })
}

impl ClosedLoopSystem {
    pub fn dim(&self) -> usize {
        self.a_e.nrows()
    }

    /// `C_e (iω - A_e)^{-1} B_e + D_e`.
    pub fn error_transfer_at(&self, omega: f64) -> Result<ComplexMatrix> {
        let lambda = Complex64::new(0.0, omega);
        let n = self.dim();
        let shifted = ComplexMatrix::identity(n, n) * lambda - to_complex(&self.a_e);
        let lu = LuSolver::new(shifted).map_err(|e| match e {
            Error::SingularMatrix { .. } => Error::pole(lambda),
            other => other,
        })?;
        Ok(to_complex(&self.c_e) * lu.solve(&to_complex(&self.b_e))? + to_complex(&self.d_e))
    }

    /// `||T(iω)|| / ||D_e||`, the error transfer relative to the direct
    /// feedthrough of the reference.
    pub fn blocking_residual(&self, omega: f64) -> Result<f64> {
        Ok(self.error_transfer_at(omega)?.norm() / self.d_e.norm())
    }

    /// Exogenous input `(w_dist, y_ref)` at time `t`; a spec without
    /// disturbance amplitudes gives zero disturbances.
    pub fn exo_input(&self, spec: &ExoSignalSpec, t: f64) -> RealVector {
        let mut w = RealVector::zeros(self.n_dist + self.n_output);
        if spec.n_dist() > 0 {
            w.rows_mut(0, self.n_dist).copy_from(&spec.eval_dist(t));
        }
        w.rows_mut(self.n_dist, self.n_output).copy_from(&spec.eval_ref(t));
        w
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockingEntry {
    pub omega: f64,
    pub residual: f64,
    pub pass: bool,
}

/// Blocking residuals at the given frequencies; conjugate frequencies give
/// conjugate values, so only `ω >= 0` is evaluated.
pub fn blocking_zeros(cl: &ClosedLoopSystem, omegas: &[f64]) -> Result<Vec<BlockingEntry>> {
    omegas
        .par_iter()
        .map(|&omega| {
            let residual = cl.blocking_residual(omega)?;
            Ok(BlockingEntry {
                omega,
                residual,
                pass: residual <= BLOCKING_TOL,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Sup of `||e(t)||` over the final window.
    pub terminal_error: f64,
    /// Fitted exponential decay rate of the error envelope.
    pub decay_rate: Option<f64>,
    /// Trapezoid approximation of `∫ e^{α t} ||e||^2 dt` over the run with
    /// `α` the fitted decay rate.
    pub weighted_integral: Option<f64>,
}

/// Sampled trajectories, one row per time sample.
#[derive(Clone, Debug, PartialEq)]
pub struct SimResult {
    pub times: Vec<f64>,
    pub y: RealMatrix,
    pub y_ref: RealMatrix,
    pub e: RealMatrix,
    pub u: RealMatrix,
    pub final_state: RealVector,
    pub metrics: Metrics,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub t_final: f64,
    /// Defaults to `DEFAULT_DT_FRACTION * t_final`.
    pub dt: Option<f64>,
}

impl SimOptions {
    pub fn new(t_final: f64, dt: Option<f64>) -> Self {
        Self { t_final, dt }
    }

    /// Number of steps and the step that divides the horizon evenly.
    pub fn grid(&self) -> Result<(usize, f64)> {
        let t_final = self.t_final;
        let dt = self.dt.unwrap_or(DEFAULT_DT_FRACTION * t_final);
        if !(t_final > 0.0 && t_final.is_finite() && dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "simulation needs t_final > 0 and dt > 0, got {t_final} and {dt}"
            )));
        }
        let steps = (t_final / dt).round().max(1.0);
        if steps > 1e8 {
            return Err(Error::InvalidConfig(format!("{steps} time steps requested")));
        }
        Ok((steps as usize, t_final / steps))
    }
}

struct Recorder {
    times: Vec<f64>,
    y: Vec<f64>,
    y_ref: Vec<f64>,
    e: Vec<f64>,
    u: Vec<f64>,
}

impl Recorder {
    fn new(capacity: usize) -> Self {
        Self {
            times: Vec::with_capacity(capacity),
            y: Vec::new(),
            y_ref: Vec::new(),
            e: Vec::new(),
            u: Vec::new(),
        }
    }

    fn record(&mut self, cl: &ClosedLoopSystem, t: f64, x: &RealVector, w: &RealVector) {
        let p = cl.n_output;
        let e = &cl.c_e * x + &cl.d_e * w;
        let y_ref = w.rows(cl.n_dist, p);
        self.times.push(t);
        self.e.extend(e.iter());
        self.y.extend(e.iter().zip(y_ref.iter()).map(|(e, r)| e + r));
        self.y_ref.extend(y_ref.iter());
        self.u.extend((&cl.c_u * x).iter());
    }

    fn finish(self, cl: &ClosedLoopSystem, final_state: RealVector, t_final: f64) -> SimResult {
        let rows = self.times.len();
        let m = cl.c_u.nrows();
        let p = cl.n_output;
        let e = RealMatrix::from_row_slice(rows, p, &self.e);
        let metrics = compute_metrics(&self.times, &e, t_final);
        SimResult {
            y: RealMatrix::from_row_slice(rows, p, &self.y),
            y_ref: RealMatrix::from_row_slice(rows, p, &self.y_ref),
            u: RealMatrix::from_row_slice(rows, m, &self.u),
            e,
            times: self.times,
            final_state,
            metrics,
        }
    }
}

fn initial_state(cl: &ClosedLoopSystem, x0: Option<&RealVector>) -> Result<RealVector> {
    match x0 {
        None => Ok(RealVector::zeros(cl.dim())),
        Some(x) if x.len() == cl.dim() => Ok(x.clone()),
        Some(x) => Err(Error::DimensionMismatch(format!(
            "initial state has length {}, closed loop has {}",
            x.len(),
            cl.dim()
        ))),
    }
}

/// Crank-Nicolson time stepping with the exogenous input sampled at the
/// half steps.
pub fn simulate(cl: &ClosedLoopSystem, spec: &ExoSignalSpec, x0: Option<&RealVector>, opts: SimOptions) -> Result<SimResult> {
    spec.validate(cl.n_output, cl.n_dist)?;
    let (steps, dt) = opts.grid()?;
    let n = cl.dim();
    let mut x = initial_state(cl, x0)?;
    let half = &cl.a_e * (0.5 * dt);
    let implicit = RealMatrix::identity(n, n) - &half;
    let lu = LuSolver::new(implicit).map_err(|e| Error::StepRejected {
        step: 0,
        reason: e.to_string(),
    })?;
    let propagate = lu.solve(&(RealMatrix::identity(n, n) + &half))?;
    let forcing = lu.solve(&(&cl.b_e * dt))?;
    debug!("Crank-Nicolson: {steps} steps of {dt:.3e} on {n} states");

    let mut rec = Recorder::new(steps + 1);
    for step in 0..steps {
        let t = step as f64 * dt;
        rec.record(cl, t, &x, &cl.exo_input(spec, t));
        x = &propagate * &x + &forcing * cl.exo_input(spec, t + 0.5 * dt);
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::StepRejected {
                step: step + 1,
                reason: "state is no longer finite".into(),
            });
        }
    }
    let t_end = steps as f64 * dt;
    rec.record(cl, t_end, &x, &cl.exo_input(spec, t_end));
    Ok(rec.finish(cl, x, t_end))
}

/// Exosystem generating the exogenous input: `w_e(t) = Γ s(t)`, `s' = S s`.
fn exosystem(cl: &ClosedLoopSystem, spec: &ExoSignalSpec) -> (RealMatrix, RealMatrix, RealVector) {
    let omegas = spec.frequencies.values();
    let dim: usize = omegas.iter().map(|w| if *w == 0.0 { 1 } else { 2 }).sum();
    let mut s = RealMatrix::zeros(dim, dim);
    let mut gamma = RealMatrix::zeros(cl.n_dist + cl.n_output, dim);
    let mut s0 = RealVector::zeros(dim);
    let dist: Vec<_> = spec.dist_components().collect();
    let refs: Vec<_> = spec.ref_components().collect();
    let mut col = 0;
    for (k, &omega) in omegas.iter().enumerate() {
        s0[col] = 1.0;
        let rows = dist
            .get(k)
            .into_iter()
            .flat_map(|c| c.amplitude.iter().enumerate().map(move |(i, a)| (i, *a, c.phase)))
            .chain(refs[k].amplitude.iter().enumerate().map(|(i, a)| (cl.n_dist + i, *a, refs[k].phase)));
        for (row, amp, phase) in rows {
            gamma[(row, col)] += amp * phase.cos();
            if omega != 0.0 {
                gamma[(row, col + 1)] -= amp * phase.sin();
            }
        }
        if omega == 0.0 {
            col += 1;
        } else {
            s[(col, col + 1)] = -omega;
            s[(col + 1, col)] = omega;
            col += 2;
        }
    }
    (gamma, s, s0)
}

/// `exp(M dt)` with the argument split into `2^k` pieces when it exceeds
/// the exponential's cap.
fn step_matrix(m: &RealMatrix, dt: f64) -> Result<RealMatrix> {
    let norm = norm1(m) * dt;
    let halvings = if norm > EXPM_CAP { (norm / EXPM_CAP).log2().ceil() as i32 } else { 0 };
    let mut e = matrix_exponential(m, dt / 2f64.powi(halvings))?;
    for _ in 0..halvings {
        e = &e * &e;
    }
    Ok(e)
}

/// Exact sampling of the linear dynamics through the matrix exponential of
/// the closed loop augmented with the exosystem.
pub fn simulate_exact(
    cl: &ClosedLoopSystem,
    spec: &ExoSignalSpec,
    x0: Option<&RealVector>,
    opts: SimOptions,
) -> Result<SimResult> {
    spec.validate(cl.n_output, cl.n_dist)?;
    let (steps, dt) = opts.grid()?;
    let n = cl.dim();
    let (gamma, s, s0) = exosystem(cl, spec);
    let ns = s.nrows();
    let generator = block(&[&[&cl.a_e, &(&cl.b_e * &gamma)], &[&RealMatrix::zeros(ns, n), &s]]);
    let phi = step_matrix(&generator, dt)?;
    let mut state = RealVector::zeros(n + ns);
    state.rows_mut(0, n).copy_from(&initial_state(cl, x0)?);
    state.rows_mut(n, ns).copy_from(&s0);

    let mut rec = Recorder::new(steps + 1);
    for step in 0..=steps {
        let t = step as f64 * dt;
        let x = state.rows(0, n).into_owned();
        rec.record(cl, t, &x, &cl.exo_input(spec, t));
        if step < steps {
            state = &phi * &state;
            if !state.iter().all(|v| v.is_finite()) {
                return Err(Error::StepRejected {
                    step: step + 1,
                    reason: "state is no longer finite".into(),
                });
            }
        }
    }
    Ok(rec.finish(cl, state.rows(0, n).into_owned(), steps as f64 * dt))
}

const ENVELOPE_WINDOWS: usize = 60;

fn compute_metrics(times: &[f64], e: &RealMatrix, t_final: f64) -> Metrics {
    let norms: Vec<f64> = e.row_iter().map(|r| r.norm()).collect();
    let start = (1.0 - FINAL_WINDOW) * t_final;
    let terminal_error = times
        .iter()
        .zip(&norms)
        .filter(|(t, _)| **t >= start - 1e-12 * t_final)
        .map(|(_, v)| *v)
        .fold(0.0, f64::max);
    let decay_rate = fit_decay_rate(times, &norms, t_final, terminal_error);
    let weighted_integral = decay_rate.map(|alpha| {
        let f: Vec<f64> = times.iter().zip(&norms).map(|(t, v)| (alpha * t).exp() * v * v).collect();
        times
            .windows(2)
            .zip(f.windows(2))
            .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
            .sum()
    });
    Metrics {
        terminal_error,
        decay_rate,
        weighted_integral,
    }
}

/// Least-squares slope of the log envelope over the windows that stand
/// clear of the steady-state floor, using the later half of them so that
/// fast initial transients do not dominate.
fn fit_decay_rate(times: &[f64], norms: &[f64], t_final: f64, floor: f64) -> Option<f64> {
    let width = t_final / ENVELOPE_WINDOWS as f64;
    let mut env = vec![0.0f64; ENVELOPE_WINDOWS];
    for (t, v) in times.iter().zip(norms) {
        let j = ((t / width) as usize).min(ENVELOPE_WINDOWS - 1);
        env[j] = env[j].max(*v);
    }
    let threshold = (10.0 * floor).max(1e-300);
    let usable: Vec<(f64, f64)> = env
        .iter()
        .enumerate()
        .skip(1)
        .take_while(|(_, v)| **v > threshold)
        .map(|(j, v)| ((j as f64 + 0.5) * width, v.ln()))
        .collect();
    let tail = &usable[usable.len() / 2..];
    if tail.len() < 3 {
        return None;
    }
    let count = tail.len() as f64;
    let mean_t = tail.iter().map(|p| p.0).sum::<f64>() / count;
    let mean_v = tail.iter().map(|p| p.1).sum::<f64>() / count;
    let sxy: f64 = tail.iter().map(|(t, v)| (t - mean_t) * (v - mean_v)).sum();
    let sxx: f64 = tail.iter().map(|(t, _)| (t - mean_t).powi(2)).sum();
    Some(-sxy / sxx)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessEntry {
    pub delta: f64,
    pub abscissa: Option<f64>,
    pub stable: bool,
    pub terminal_error: Option<f64>,
    /// Whether the terminal error meets the tracking bound; only claimed
    /// for stable perturbations.
    pub tracking: Option<bool>,
    pub note: Option<String>,
}

impl RobustnessEntry {
    pub fn pass(&self) -> bool {
        !self.stable || self.tracking == Some(true)
    }
}

/// Re-certifies and re-simulates the unchanged controller on plants with
/// conductivity scaled by `1 + δ`.
pub fn robustness_suite(
    cfg: &PlantConfig,
    ctrl: &FlatController,
    deltas: &[f64],
    spec: &ExoSignalSpec,
    opts: SimOptions,
) -> Vec<RobustnessEntry> {
    deltas
        .par_iter()
        .map(|&delta| {
            let entry = |abscissa, stable, terminal_error: Option<f64>, note| RobustnessEntry {
                delta,
                abscissa,
                stable,
                terminal_error,
                tracking: terminal_error.map(|e| e <= TRACKING_TOL),
                note,
            };
            let run = || -> Result<RobustnessEntry> {
                let plant = discretize(&cfg.with_conductivity_scaled(1.0 + delta))?;
                let cl = assemble_closed_loop(&plant, ctrl)?;
                let cert = certify_stability(&cl)?;
                if !cert.pass {
                    return Ok(entry(Some(cert.abscissa), false, None, None));
                }
                let sim = simulate(&cl, spec, None, opts)?;
                Ok(entry(Some(cert.abscissa), true, Some(sim.metrics.terminal_error), None))
            };
            run().unwrap_or_else(|err| {
                warn!("robustness run at delta = {delta} failed: {err}");
                entry(None, false, None, Some(err.to_string()))
            })
        })
        .collect()
}
