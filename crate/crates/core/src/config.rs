//! Run configuration read by the command-line front end.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::closedloop::{ClosedLoopSystem, SimOptions};
use crate::error::{Error, Result};
use crate::model::{PlantConfig, Profile};
use crate::numerics::RealVector;
use crate::signals::ExoSignalSpec;
use crate::stabilization::LqrWeights;

pub const DEFAULT_T_FINAL: f64 = 30.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub plant: PlantConfig,
    pub signals: ExoSignalSpec,
    #[serde(default)]
    pub design: DesignOptions,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub verification: VerificationConfig,
    #[serde(default)]
    pub output: OutputPaths,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignOptions {
    #[serde(default)]
    pub feedback: LqrWeights,
    #[serde(default)]
    pub injection: LqrWeights,
    #[serde(default)]
    pub internal_model: LqrWeights,
    /// Number of cosine basis functions used to approximate `HK`; the exact
    /// grid operator is used when absent.
    #[serde(default)]
    pub truncation: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    #[serde(default = "default_t_final")]
    pub t_final: f64,
    #[serde(default)]
    pub dt: Option<f64>,
    /// Initial plant state as a profile on the grid (zero when absent).
    #[serde(default)]
    pub initial_plant_state: Option<Profile>,
    /// Uniform noise of this amplitude is added to every closed-loop state.
    #[serde(default)]
    pub initial_noise: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_t_final() -> f64 {
    DEFAULT_T_FINAL
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            t_final: DEFAULT_T_FINAL,
            dt: None,
            initial_plant_state: None,
            initial_noise: 0.0,
            seed: 0,
        }
    }
}

impl SimulationConfig {
    pub fn options(&self) -> SimOptions {
        SimOptions::new(self.t_final, self.dt)
    }

    /// Closed-loop initial state; `None` means zero.
    pub fn initial_state(&self, plant: &PlantConfig, cl: &ClosedLoopSystem) -> Option<RealVector> {
        if self.initial_plant_state.is_none() && self.initial_noise == 0.0 {
            return None;
        }
        let mut x = RealVector::zeros(cl.dim());
        if let Some(profile) = &self.initial_plant_state {
            let domain = plant.interval();
            for (xi, v) in plant.nodes().iter().zip(x.iter_mut()) {
                *v = profile.eval(*xi, domain);
            }
        }
        if self.initial_noise != 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            for v in x.iter_mut() {
                *v += self.initial_noise * rng.gen_range(-1.0..=1.0);
            }
        }
        Some(x)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerificationConfig {
    /// Relative conductivity perturbations tried with the unchanged
    /// controller.
    #[serde(default = "default_perturbations")]
    pub perturbations: Vec<f64>,
}

fn default_perturbations() -> Vec<f64> {
    vec![-0.1, 0.0, 0.1]
}

impl Default for VerificationConfig {
    fn default() -> Self {
        Self {
            perturbations: default_perturbations(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputPaths {
    #[serde(default)]
    pub controller: Option<String>,
    #[serde(default)]
    pub trajectory: Option<String>,
    #[serde(default)]
    pub metrics: Option<String>,
    #[serde(default)]
    pub report: Option<String>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(classify_parse_error)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.plant.validate()?;
        self.signals.validate(1, self.plant.n_dist())?;
        self.design.feedback.validate("feedback")?;
        self.design.injection.validate("injection")?;
        self.design.internal_model.validate("internal model")?;
        if let Some(n) = self.design.truncation {
            if n > self.plant.n_grid {
                return Err(Error::InvalidConfig(format!(
                    "truncation {n} exceeds the grid size {}",
                    self.plant.n_grid
                )));
            }
        }
        self.simulation.options().grid()?;
        if !self.simulation.initial_noise.is_finite() {
            return Err(Error::InvalidConfig("initial_noise must be finite".into()));
        }
        if self.verification.perturbations.iter().any(|d| !d.is_finite()) {
            return Err(Error::InvalidConfig("perturbations must be finite".into()));
        }
        Ok(())
    }
}

/// Frequency problems keep their own error kind even when they surface
/// through the JSON parser.
fn classify_parse_error(e: serde_json::Error) -> Error {
    let msg = e.to_string();
    if msg.contains("frequenc") {
        Error::InvalidFrequencies(msg)
    } else {
        Error::InvalidConfig(msg)
    }
}
