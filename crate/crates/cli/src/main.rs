//! `regforge` command-line front end.
//!
//! Exit codes: 0 success, 1 configuration or input-file error, 2 design or
//! simulation failure, 3 verification failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use regforge::artifact::ControllerFile;
use regforge::config::RunConfig;
use regforge::pipeline::{self, design_from_config, freqresp, freqresp_table, run_simulation, trajectory_csv};
use regforge::Error;

const DEFAULT_CONTROLLER: &str = "controller.json";
const DEFAULT_TRAJECTORY: &str = "trajectory.csv";
const DEFAULT_METRICS: &str = "metrics.json";

#[derive(Parser)]
#[command(name = "regforge", version, about = "Robust output regulation for boundary-controlled diffusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Design a controller and write it as JSON.
    Design {
        #[command(flatten)]
        common: Common,
    },
    /// Simulate the closed loop and write the trajectory CSV and metrics JSON.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        stored: Stored,
        #[command(flatten)]
        timing: Timing,
    },
    /// Check a stored controller against the configured plant.
    Verify {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        stored: Stored,
        #[command(flatten)]
        timing: Timing,
    },
    /// Tabulate P, P_K and G_K through both evaluation routes.
    Freqresp {
        #[command(flatten)]
        common: Common,
        /// Frequencies to evaluate; repeat the flag or separate by commas.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        omega: Vec<f64>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output path; overrides the path in the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Stored {
    #[arg(long)]
    controller: Option<PathBuf>,
    /// Accept a controller designed for a different plant.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct Timing {
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long = "t-final")]
    t_final: Option<f64>,
}

enum Failure {
    Config(String),
    Design(String),
    Verification(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Design(_) => 2,
            Failure::Verification(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Design(m) | Failure::Verification(m) => m,
        }
    }
}

fn is_input_error(e: &Error) -> bool {
    matches!(
        e,
        Error::InvalidConfig(_)
            | Error::InvalidFrequencies(_)
            | Error::InvalidSignals(_)
            | Error::HashMismatch { .. }
            | Error::MalformedArtifact(_)
            | Error::Io(_)
            | Error::Json(_)
    )
}

/// Input errors exit 1 whatever the command; other errors take the
/// command's own code.
fn classify(e: Error, otherwise: fn(String) -> Failure) -> Failure {
    if is_input_error(&e) {
        Failure::Config(e.to_string())
    } else {
        otherwise(e.to_string())
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    std::fs::write(path, contents).map_err(|e| Failure::Config(format!("cannot write {}: {e}", path.display())))
}

fn load_config(path: &Path, timing: Option<&Timing>) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::load(path).map_err(|e| Failure::Config(e.to_string()))?;
    if let Some(t) = timing {
        if let Some(dt) = t.dt {
            cfg.simulation.dt = Some(dt);
        }
        if let Some(t_final) = t.t_final {
            cfg.simulation.t_final = t_final;
        }
        cfg.validate().map_err(|e| Failure::Config(e.to_string()))?;
    }
    Ok(cfg)
}

fn controller_path(stored: &Stored, cfg: &RunConfig) -> PathBuf {
    stored
        .controller
        .clone()
        .or_else(|| cfg.output.controller.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_CONTROLLER))
}

fn load_controller(stored: &Stored, cfg: &RunConfig) -> Result<ControllerFile, Failure> {
    ControllerFile::load(&controller_path(stored, cfg)).map_err(|e| Failure::Config(e.to_string()))
}

fn cmd_design(common: &Common) -> Result<(), Failure> {
    let cfg = load_config(&common.config, None)?;
    let file = design_from_config(&cfg).map_err(|e| {
        if is_input_error(&e.error) {
            Failure::Config(e.to_string())
        } else {
            Failure::Design(e.to_string())
        }
    })?;
    let out = common
        .out
        .clone()
        .or_else(|| cfg.output.controller.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_CONTROLLER));
    write_file(&out, &file.to_json())?;

    let c = &file.certificates;
    println!("controller written to {}", out.display());
    println!("plant hash               {}", file.plant_hash);
    println!("feedback margin          {:.6e}", c.margin_feedback);
    println!("injection margin         {:.6e}", c.margin_injection);
    println!("internal model abscissa  {:.6e}", c.internal_model_abscissa);
    println!("closed-loop abscissa     {:.6e}", c.closed_loop_abscissa);
    println!("Sylvester residual       {:.3e}", c.sylvester_residual);
    if file.design.truncation.is_some() {
        println!("truncation error         {:.3e}", c.truncation_error);
    }
    for zm in &c.transmission_zeros.margins {
        println!("sigma_min P_K(i{:<10}) {:.6e}", zm.omega, zm.sigma_min);
    }
    Ok(())
}

fn cmd_simulate(common: &Common, stored: &Stored, timing: &Timing) -> Result<(), Failure> {
    let cfg = load_config(&common.config, Some(timing))?;
    let file = load_controller(stored, &cfg)?;
    let run = run_simulation(&cfg, &file, stored.force, cfg.simulation.options())
        .map_err(|e| classify(e, Failure::Design))?;
    let trajectory = common
        .out
        .clone()
        .or_else(|| cfg.output.trajectory.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_TRAJECTORY));
    let metrics = cfg
        .output
        .metrics
        .as_ref()
        .map(PathBuf::from)
        .unwrap_or_else(|| trajectory.with_file_name(DEFAULT_METRICS));
    write_file(&trajectory, &trajectory_csv(&run.result))?;
    let mut summary = serde_json::to_string_pretty(&run.summary).expect("summary serializes");
    summary.push('\n');
    write_file(&metrics, &summary)?;
    println!("trajectory written to {}", trajectory.display());
    println!("metrics written to {}", metrics.display());
    println!("terminal error {:.3e}", run.summary.terminal_error);
    Ok(())
}

fn cmd_verify(common: &Common, stored: &Stored, timing: &Timing) -> Result<(), Failure> {
    let cfg = load_config(&common.config, Some(timing))?;
    let file = load_controller(stored, &cfg)?;
    let report = pipeline::verify(&cfg, &file, stored.force).map_err(|e| classify(e, Failure::Verification))?;
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    match common.out.clone().or_else(|| cfg.output.report.as_ref().map(PathBuf::from)) {
        Some(path) => write_file(&path, &text)?,
        None => print!("{text}"),
    }
    let failures = report.failures();
    if report.pass {
        info!("all {} checks passed", report.checks.len());
        return Ok(());
    }
    let names: Vec<&str> = failures.iter().map(|c| c.name.as_str()).collect();
    Err(Failure::Verification(format!("failed checks: {}", names.join(", "))))
}

fn cmd_freqresp(common: &Common, omegas: &[f64]) -> Result<(), Failure> {
    let cfg = load_config(&common.config, None)?;
    let rows = freqresp(&cfg.plant, cfg.design.feedback, omegas).map_err(|e| classify(e, Failure::Design))?;
    let table = freqresp_table(&rows);
    match &common.out {
        Some(path) => write_file(path, &table),
        None => {
            print!("{table}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("REGFORGE_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = match &cli.command {
        Command::Design { common } => cmd_design(common),
        Command::Simulate { common, stored, timing } => cmd_simulate(common, stored, timing),
        Command::Verify { common, stored, timing } => cmd_verify(common, stored, timing),
        Command::Freqresp { common, omega } => cmd_freqresp(common, omega),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message());
            ExitCode::from(failure.code())
        }
    }
}
