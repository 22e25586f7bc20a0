//! The controller file written by `design` and read by `simulate` and
//! `verify`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::closedloop::{BLOCKING_TOL, STAB_FLOOR, TRACKING_TOL};
use crate::config::DesignOptions;
use crate::controller::{ControllerRealization, FlatController};
use crate::error::{Error, Result};
use crate::freqdata::{FreqPoint, TransmissionZeroReport, REAL_RESIDUE_TOL, TZ_TOL};
use crate::numerics::{RealMatrix, PIVOT_TOL, TOL_CARE, TOL_LYAPUNOV, TOL_SOLVE};
use crate::signals::Frequencies;

pub const SCHEMA_VERSION: u32 = 1;
/// Relative Sylvester residual accepted for the exact `HK`.
pub const SYLVESTER_TOL: f64 = 1e-8;
/// Relative disagreement accepted between the two frequency routes.
pub const ROUTE_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub solve: f64,
    pub pivot: f64,
    pub lyapunov: f64,
    pub care: f64,
    pub real_residue: f64,
    pub transmission_zero: f64,
    pub stability_floor: f64,
    pub blocking: f64,
    pub sylvester: f64,
    pub route: f64,
    pub tracking: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            solve: TOL_SOLVE,
            pivot: PIVOT_TOL,
            lyapunov: TOL_LYAPUNOV,
            care: TOL_CARE,
            real_residue: REAL_RESIDUE_TOL,
            transmission_zero: TZ_TOL,
            stability_floor: STAB_FLOOR,
            blocking: BLOCKING_TOL,
            sylvester: SYLVESTER_TOL,
            route: ROUTE_TOL,
            tracking: TRACKING_TOL,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificates {
    pub margin_feedback: f64,
    pub margin_injection: f64,
    /// Abscissa of `G1 + B1 K1`.
    pub internal_model_abscissa: f64,
    pub closed_loop_abscissa: f64,
    /// Relative Sylvester residual of the exact `HK`.
    pub sylvester_residual: f64,
    /// Weighted Hilbert-Schmidt distance between the `HK` used and the
    /// exact one; zero without truncation.
    pub truncation_error: f64,
    pub transmission_zeros: TransmissionZeroReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerFile {
    pub schema_version: u32,
    pub plant_hash: String,
    /// Block order of the internal model: the constant block, then one
    /// (cosine, sine) pair per frequency in this order.
    pub frequencies: Frequencies,
    pub tolerances: Tolerances,
    pub design: DesignOptions,
    pub realization: ControllerRealization,
    pub flattened: FlatController,
    #[serde(with = "crate::dense::real")]
    pub b1: RealMatrix,
    pub freqdata: Vec<FreqPoint>,
    pub certificates: Certificates,
}

impl ControllerFile {
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("controller file serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ControllerFile =
            serde_json::from_str(text).map_err(|e| Error::MalformedArtifact(e.to_string()))?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(Error::MalformedArtifact(format!(
                "schema version {} is not supported (expected {SCHEMA_VERSION})",
                file.schema_version
            )));
        }
        file.realization
            .check_dimensions()
            .map_err(|e| Error::MalformedArtifact(e.to_string()))?;
        let ctrl = &file.realization;
        let nc = ctrl.internal_model.dim() + ctrl.n_state();
        let flat = &file.flattened;
        if flat.generator.shape() != (nc, nc)
            || flat.input.shape() != (nc, ctrl.n_output())
            || flat.output.shape() != (ctrl.n_input(), nc)
        {
            return Err(Error::MalformedArtifact("flattened controller has the wrong shape".into()));
        }
        if file.b1.shape() != (ctrl.internal_model.dim(), ctrl.n_input()) {
            return Err(Error::MalformedArtifact("B1 has the wrong shape".into()));
        }
        if file.realization.internal_model.frequencies != file.frequencies {
            return Err(Error::MalformedArtifact(
                "internal model frequencies differ from the file's frequency list".into(),
            ));
        }
        if file.freqdata.len() != file.frequencies.len() {
            return Err(Error::MalformedArtifact("one frequency data entry per frequency expected".into()));
        }
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::MalformedArtifact(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Fails with `HashMismatch` unless the file was designed for the plant
    /// with digest `found`.
    pub fn check_plant(&self, found: &str) -> Result<()> {
        if self.plant_hash != found {
            return Err(Error::HashMismatch {
                expected: self.plant_hash.clone(),
                found: found.to_string(),
            });
        }
        Ok(())
    }
}
