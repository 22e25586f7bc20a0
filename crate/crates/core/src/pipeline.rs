//! End-to-end design, simulation, verification and frequency-response
//! runs on top of the individual modules.

use std::fmt::{self, Write as _};

use log::info;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::artifact::{Certificates, ControllerFile, Tolerances, ROUTE_TOL, SCHEMA_VERSION, SYLVESTER_TOL};
use crate::closedloop::{
    assemble_closed_loop, blocking_zeros, certify_stability, robustness_suite, simulate, RobustnessEntry, SimOptions,
    SimResult, STAB_FLOOR,
};
use crate::config::{DesignOptions, RunConfig};
use crate::controller::{assemble_controller, design_k1};
use crate::error::{Error, Result};
use crate::freqdata::{
    build_b1, build_hk, build_hk_truncated, check_transmission_zeros, compute_freq_points, eval_pk_pki_reduced,
    reference_gain, sylvester_residual, weighted_hs_norm, DirectRoute,
};
use crate::internal_model::build_internal_model;
use crate::model::{discretize, neumann_eigenbasis, PlantConfig, StateSpaceModel};
use crate::numerics::{spectral_abscissa, ComplexMatrix, RealMatrix};
use crate::signals::Frequencies;
use crate::stabilization::{design_k0, hautus_controllable, stabilize, LqrWeights};

/// An error tagged with the design stage that produced it.
#[derive(Debug)]
pub struct StageError {
    pub stage: &'static str,
    pub error: Error,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} failed: {}", self.stage, self.error)
    }
}

impl std::error::Error for StageError {}

trait Stage<T> {
    fn stage(self, name: &'static str) -> std::result::Result<T, StageError>;
}

impl<T> Stage<T> for Result<T> {
    fn stage(self, name: &'static str) -> std::result::Result<T, StageError> {
        self.map_err(|error| StageError { stage: name, error })
    }
}

/// Designs the controller for a plant and a set of frequencies. Signal
/// amplitudes and phases play no part in the design.
pub fn design(
    plant_cfg: &PlantConfig,
    freqs: &Frequencies,
    opts: &DesignOptions,
) -> std::result::Result<ControllerFile, StageError> {
    let sys = discretize(plant_cfg).stage("discretize")?;
    let gains = stabilize(&sys, opts.feedback, opts.injection).stage("stabilization")?;
    info!(
        "stabilizing gains: feedback margin {:.4}, injection margin {:.4}",
        gains.margin_feedback, gains.margin_injection
    );
    let im = build_internal_model(freqs, sys.n_output()).stage("internal model")?;
    let points = compute_freq_points(&sys, &gains.k0, freqs).stage("frequency data")?;
    let tz = check_transmission_zeros(&points, reference_gain(&sys, &gains.k0))
        .into_result()
        .stage("transmission zeros")?;
    let b1 = build_b1(&points).stage("frequency data")?;
    let hk_exact = build_hk(&points).stage("frequency data")?;
    let sylvester = sylvester_residual(&hk_exact, &im, &sys, &gains.k0);

    let (hk, truncation_error) = match opts.truncation {
        None => (hk_exact, 0.0),
        Some(count) => {
            let basis = neumann_eigenbasis(plant_cfg, count).stage("truncation")?;
            let hk_n = build_hk_truncated(&sys, &gains.k0, freqs, &basis).stage("truncation")?;
            let err = weighted_hs_norm(&(&hk_n - &hk_exact), &sys.weights);
            (hk_n, err)
        }
    };

    let controllable = hautus_controllable(&im.g1, &b1).stage("internal model gain")?;
    if !controllable {
        return Err(StageError {
            stage: "internal model gain",
            error: Error::NotStabilizable("(G1, B1) fails the Hautus test".into()),
        });
    }
    let (k1, im_abscissa) = design_k1(&im.g1, &b1, opts.internal_model).stage("internal model gain")?;
    let realization =
        assemble_controller(im, gains.l.clone(), gains.k0.clone(), k1, hk, &sys).stage("assembly")?;
    let flattened = realization.flatten();
    let cl = assemble_closed_loop(&sys, &flattened).stage("assembly")?;
    let cert = certify_stability(&cl).stage("closed-loop certificate")?;
    if !cert.pass {
        return Err(StageError {
            stage: "closed-loop certificate",
            error: Error::NotHurwitz {
                abscissa: cert.abscissa,
            },
        });
    }
    info!("closed-loop abscissa {:.4e}", cert.abscissa);

    Ok(ControllerFile {
        schema_version: SCHEMA_VERSION,
        plant_hash: plant_cfg.digest(),
        frequencies: freqs.clone(),
        tolerances: Tolerances::default(),
        design: opts.clone(),
        realization,
        flattened,
        b1,
        freqdata: points,
        certificates: Certificates {
            margin_feedback: gains.margin_feedback,
            margin_injection: gains.margin_injection,
            internal_model_abscissa: im_abscissa,
            closed_loop_abscissa: cert.abscissa,
            sylvester_residual: sylvester,
            truncation_error,
            transmission_zeros: tz,
        },
    })
}

pub fn design_from_config(cfg: &RunConfig) -> std::result::Result<ControllerFile, StageError> {
    design(&cfg.plant, &cfg.signals.frequencies, &cfg.design)
}

/// Simulates the configured plant under the stored controller.
pub fn run_simulation(cfg: &RunConfig, file: &ControllerFile, force: bool, opts: SimOptions) -> Result<SimRun> {
    if !force {
        file.check_plant(&cfg.plant.digest())?;
    }
    let plant = discretize(&cfg.plant)?;
    let cl = assemble_closed_loop(&plant, &file.realization.flatten())?;
    let cert = certify_stability(&cl)?;
    let x0 = cfg.simulation.initial_state(&cfg.plant, &cl);
    let result = simulate(&cl, &cfg.signals, x0.as_ref(), opts)?;
    let (steps, dt) = opts.grid()?;
    Ok(SimRun {
        summary: SimSummary {
            t_final: opts.t_final,
            dt,
            steps,
            closed_loop_abscissa: cert.abscissa,
            stable: cert.pass,
            terminal_error: result.metrics.terminal_error,
            decay_rate: result.metrics.decay_rate,
            weighted_integral: result.metrics.weighted_integral,
        },
        result,
    })
}

pub struct SimRun {
    pub result: SimResult,
    pub summary: SimSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub t_final: f64,
    pub dt: f64,
    pub steps: usize,
    pub closed_loop_abscissa: f64,
    pub stable: bool,
    pub terminal_error: f64,
    pub decay_rate: Option<f64>,
    pub weighted_integral: Option<f64>,
}

fn column_names(base: &str, count: usize) -> Vec<String> {
    if count == 1 {
        vec![base.to_string()]
    } else {
        (1..=count).map(|i| format!("{base}_{i}")).collect()
    }
}

/// Trajectory table with header `t,y,y_ref,e,u` (indexed names for vector
/// signals). Numbers use the shortest representation that round-trips.
pub fn trajectory_csv(sim: &SimResult) -> String {
    let mut header = vec!["t".to_string()];
    for (name, m) in [("y", &sim.y), ("y_ref", &sim.y_ref), ("e", &sim.e), ("u", &sim.u)] {
        header.extend(column_names(name, m.ncols()));
    }
    let mut out = header.join(",");
    out.push('\n');
    for (i, t) in sim.times.iter().enumerate() {
        let _ = write!(out, "{t}");
        for m in [&sim.y, &sim.y_ref, &sim.e, &sim.u] {
            for v in m.row(i).iter() {
                let _ = write!(out, ",{v}");
            }
        }
        out.push('\n');
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub value: Option<f64>,
    pub threshold: Option<f64>,
    pub detail: Option<String>,
}

impl Check {
    fn measured(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            pass: value <= threshold,
            value: Some(value),
            threshold: Some(threshold),
            detail: None,
        }
    }

    fn flag(name: impl Into<String>, pass: bool, detail: Option<String>) -> Self {
        Self {
            name: name.into(),
            pass,
            value: None,
            threshold: None,
            detail,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub pass: bool,
    pub plant_hash: String,
    pub checks: Vec<Check>,
    pub robustness: Vec<RobustnessEntry>,
}

impl VerifyReport {
    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }
}

fn relative_difference(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    if a.shape() != b.shape() {
        return f64::INFINITY;
    }
    (a - b).norm() / a.norm().max(f64::MIN_POSITIVE)
}

/// Observer copy of the plant as a model, with the config's quadrature
/// weights when the sizes agree.
fn observer_system(cfg: &PlantConfig, file: &ControllerFile) -> Result<StateSpaceModel> {
    let o = &file.realization.observer;
    let n = o.a.nrows();
    let weights = if cfg.n_grid == n {
        cfg.weights()
    } else {
        crate::numerics::RealVector::from_element(n, 1.0)
    };
    StateSpaceModel::new(
        o.a.clone(),
        o.b.clone(),
        RealMatrix::zeros(n, 0),
        o.c.clone(),
        o.d.clone(),
        RealMatrix::zeros(o.c.nrows(), 0),
        weights,
    )
}

/// Runs every check on a stored controller against the configured plant.
/// The structured realization is authoritative; the stored flattened
/// matrices are checked against it.
pub fn verify(cfg: &RunConfig, file: &ControllerFile, force: bool) -> Result<VerifyReport> {
    let hash = cfg.plant.digest();
    if !force {
        file.check_plant(&hash)?;
    }
    let ctrl = &file.realization;
    let mut checks = Vec::new();

    let flat = ctrl.flatten();
    checks.push(Check::flag("flattened_consistency", flat == file.flattened, None));
    let scale = ctrl.k2.amax().max(1.0);
    checks.push(Check::measured("assembly_identity", ctrl.assembly_defect() / scale, 1e-12));
    checks.push(Check::flag(
        "internal_model_structure",
        ctrl.internal_model.check().is_ok(),
        None,
    ));
    let im_abscissa = spectral_abscissa(&(&ctrl.internal_model.g1 + &file.b1 * &ctrl.k1))?;
    checks.push(Check::measured("internal_model_stability", im_abscissa, -STAB_FLOOR));

    let obs = observer_system(&cfg.plant, file)?;
    match file.design.truncation {
        None => {
            let residual = sylvester_residual(&ctrl.hk, &ctrl.internal_model, &obs, &ctrl.k0);
            checks.push(Check::measured("sylvester_residual", residual, SYLVESTER_TOL));
        }
        Some(count) => {
            let check = neumann_eigenbasis(&cfg.plant, count)
                .and_then(|basis| build_hk_truncated(&obs, &ctrl.k0, &file.frequencies, &basis))
                .map(|hk_n| {
                    let diff = weighted_hs_norm(&(&hk_n - &ctrl.hk), &obs.weights)
                        / weighted_hs_norm(&hk_n, &obs.weights).max(f64::MIN_POSITIVE);
                    Check::measured("truncated_hk_consistency", diff, SYLVESTER_TOL)
                })
                .unwrap_or_else(|e| Check::flag("truncated_hk_consistency", false, Some(e.to_string())));
            checks.push(check);
        }
    }

    for (point, stored) in file.frequencies.values().iter().zip(&file.freqdata) {
        let omega = *point;
        let direct = DirectRoute::new(&obs, &ctrl.k0, omega).and_then(|r| r.values());
        let (pk, pki) = match direct {
            Ok(v) => v,
            Err(e) => {
                checks.push(Check::flag(format!("direct_route(omega={omega})"), false, Some(e.to_string())));
                continue;
            }
        };
        let stored_diff = relative_difference(&pk, &stored.pk).max(relative_difference(&pki, &stored.pki));
        checks.push(Check::measured(format!("stored_frequency_data(omega={omega})"), stored_diff, ROUTE_TOL));
        if omega != 0.0 {
            let check = match eval_pk_pki_reduced(&obs, &ctrl.k0, omega) {
                Ok(r) => Check::measured(
                    format!("route_agreement(omega={omega})"),
                    relative_difference(&pk, &r.pk).max(relative_difference(&pki, &r.pki)),
                    ROUTE_TOL,
                ),
                Err(e) => Check::flag(format!("route_agreement(omega={omega})"), false, Some(e.to_string())),
            };
            checks.push(check);
        }
    }

    let plant = discretize(&cfg.plant)?;
    let cl = assemble_closed_loop(&plant, &flat)?;
    let cert = certify_stability(&cl)?;
    checks.push(Check::measured("closed_loop_stability", cert.abscissa, -STAB_FLOOR));

    let mut robustness = Vec::new();
    if cert.pass {
        for entry in blocking_zeros(&cl, file.frequencies.values())? {
            checks.push(Check::measured(
                format!("blocking_zero(omega={})", entry.omega),
                entry.residual,
                crate::closedloop::BLOCKING_TOL,
            ));
        }
        robustness = robustness_suite(
            &cfg.plant,
            &flat,
            &cfg.verification.perturbations,
            &cfg.signals,
            cfg.simulation.options(),
        );
        for entry in &robustness {
            let detail = match (entry.stable, entry.terminal_error) {
                (true, Some(err)) => format!("abscissa {:.4e}, terminal error {err:.3e}", entry.abscissa.unwrap_or(f64::NAN)),
                (false, _) => format!(
                    "not stable (abscissa {:?}); no tracking claim{}",
                    entry.abscissa,
                    entry.note.as_ref().map(|n| format!(": {n}")).unwrap_or_default()
                ),
                (true, None) => "no simulation result".into(),
            };
            checks.push(Check::flag(format!("robustness(delta={})", entry.delta), entry.pass(), Some(detail)));
        }
    } else {
        checks.push(Check::flag(
            "blocking_zeros",
            false,
            Some("skipped: closed loop is not stable".into()),
        ));
        checks.push(Check::flag(
            "robustness",
            false,
            Some("skipped: closed loop is not stable".into()),
        ));
    }

    Ok(VerifyReport {
        pass: checks.iter().all(|c| c.pass),
        plant_hash: hash,
        checks,
        robustness,
    })
}

/// One row of the frequency-response table.
#[derive(Clone, Debug, PartialEq)]
pub struct FreqRow {
    pub omega: f64,
    pub route: &'static str,
    pub p: Option<ComplexMatrix>,
    pub pk: Option<ComplexMatrix>,
    pub gk: Option<ComplexMatrix>,
    /// Relative difference from the direct route's `P_K`.
    pub disagreement: Option<f64>,
    /// `"ok"`, `"pole"` or an error message.
    pub status: String,
}

/// `P`, `P_K` and `G_K` at each frequency through both routes, with `K0`
/// designed from the configured feedback weights.
pub fn freqresp(plant_cfg: &PlantConfig, feedback: LqrWeights, omegas: &[f64]) -> Result<Vec<FreqRow>> {
    if omegas.is_empty() {
        return Ok(Vec::new());
    }
    if let Some(bad) = omegas.iter().find(|w| !w.is_finite()) {
        return Err(Error::InvalidFrequencies(format!("non-finite frequency {bad}")));
    }
    let sys = discretize(plant_cfg)?;
    let k0 = design_k0(&sys, feedback)?;
    let status = |e: &Error| match e {
        Error::ResolventPole { .. } => "pole".to_string(),
        other => other.to_string(),
    };
    let mut rows = Vec::with_capacity(2 * omegas.len());
    for &omega in omegas {
        let direct = DirectRoute::new(&sys, &k0, omega).and_then(|r| r.values());
        let reduced = eval_pk_pki_reduced(&sys, &k0, omega);
        let open = reduced.as_ref().ok();
        let direct_pk = direct.as_ref().ok().map(|v| v.0.clone());
        rows.push(FreqRow {
            omega,
            route: "direct",
            p: open.map(|r| r.p.clone()),
            pk: direct_pk.clone(),
            gk: open.map(|r| r.gk.clone()),
            disagreement: None,
            status: direct.as_ref().map_or_else(status, |_| "ok".into()),
        });
        rows.push(FreqRow {
            omega,
            route: "reduced",
            p: open.map(|r| r.p.clone()),
            pk: open.map(|r| r.pk.clone()),
            gk: open.map(|r| r.gk.clone()),
            disagreement: match (&direct_pk, open) {
                (Some(d), Some(r)) => Some(relative_difference(d, &r.pk)),
                _ => None,
            },
            status: reduced.as_ref().map_or_else(status, |_| "ok".into()),
        });
    }
    Ok(rows)
}

fn format_complex(z: Complex64) -> String {
    format!("{:.10e}{:+.10e}i", z.re, z.im)
}

fn format_matrix(m: &Option<ComplexMatrix>) -> String {
    match m {
        None => "n/a".into(),
        Some(m) => m.iter().map(|z| format_complex(*z)).collect::<Vec<_>>().join(";"),
    }
}

pub const FREQRESP_HEADER: &str = "omega\troute\tP\tP_K\tG_K\tdisagreement\tstatus";

/// Tab-separated table with a header line.
pub fn freqresp_table(rows: &[FreqRow]) -> String {
    let mut out = String::from(FREQRESP_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.omega,
            r.route,
            format_matrix(&r.p),
            format_matrix(&r.pk),
            format_matrix(&r.gk),
            r.disagreement.map_or_else(|| "-".into(), |d| format!("{d:.3e}")),
            r.status
        );
    }
    out
}
