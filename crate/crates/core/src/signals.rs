//! Finite sums of sinusoids used as references and disturbances.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::RealVector;

/// Strictly increasing, finite, nonnegative frequencies starting at 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Frequencies(Vec<f64>);

impl Frequencies {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.first() != Some(&0.0) {
            return Err(Error::InvalidFrequencies(format!(
                "frequency list must start with 0, got {values:?}"
            )));
        }
        if let Some(bad) = values.iter().find(|w| !w.is_finite()) {
            return Err(Error::InvalidFrequencies(format!("non-finite frequency {bad}")));
        }
        if let Some(pair) = values.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::InvalidFrequencies(format!(
                "frequencies must be strictly increasing, found {} then {}",
                pair[0], pair[1]
            )));
        }
        Ok(Self(values))
    }

    /// Only the constant mode.
    pub fn constant() -> Self {
        Self(vec![0.0])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    /// Number of nonzero frequencies.
    pub fn q(&self) -> usize {
        self.0.len() - 1
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl TryFrom<Vec<f64>> for Frequencies {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<Frequencies> for Vec<f64> {
    fn from(f: Frequencies) -> Self {
        f.0
    }
}

/// `y_ref(t) = Σ a_k cos(ω_k t + θ_k)` and `w(t) = Σ b_k cos(ω_k t + φ_k)`.
///
/// Empty phase lists mean all phases are zero; an empty disturbance
/// amplitude list means no disturbance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExoSignalSpec {
    pub frequencies: Frequencies,
    pub ref_amplitudes: Vec<Vec<f64>>,
    #[serde(default)]
    pub ref_phases: Vec<f64>,
    #[serde(default)]
    pub dist_amplitudes: Vec<Vec<f64>>,
    #[serde(default)]
    pub dist_phases: Vec<f64>,
}

/// One cosine term `amplitude cos(ω t + phase)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Component<'a> {
    pub omega: f64,
    pub amplitude: &'a [f64],
    pub phase: f64,
}

impl ExoSignalSpec {
    /// All amplitudes zero.
    pub fn zero(frequencies: Frequencies, p: usize, n_dist: usize) -> Self {
        let len = frequencies.len();
        Self {
            frequencies,
            ref_amplitudes: vec![vec![0.0; p]; len],
            ref_phases: Vec::new(),
            dist_amplitudes: vec![vec![0.0; n_dist]; len],
            dist_phases: Vec::new(),
        }
    }

    pub fn n_output(&self) -> usize {
        self.ref_amplitudes.first().map_or(0, Vec::len)
    }

    pub fn n_dist(&self) -> usize {
        self.dist_amplitudes.first().map_or(0, Vec::len)
    }

    /// Checks amplitude shapes against `p` outputs and `n_dist` disturbance
    /// channels. An empty disturbance list is accepted for any `n_dist`.
    pub fn validate(&self, p: usize, n_dist: usize) -> Result<()> {
        let len = self.frequencies.len();
        check_amplitudes("ref_amplitudes", &self.ref_amplitudes, len, p)?;
        check_phases("ref_phases", &self.ref_phases, len)?;
        if !self.dist_amplitudes.is_empty() {
            check_amplitudes("dist_amplitudes", &self.dist_amplitudes, len, n_dist)?;
        }
        check_phases("dist_phases", &self.dist_phases, len)
    }

    pub fn ref_components(&self) -> impl Iterator<Item = Component<'_>> {
        components(self.frequencies.values(), &self.ref_amplitudes, &self.ref_phases)
    }

    pub fn dist_components(&self) -> impl Iterator<Item = Component<'_>> {
        components(self.frequencies.values(), &self.dist_amplitudes, &self.dist_phases)
    }

    pub fn eval_ref(&self, t: f64) -> RealVector {
        sum_at(self.ref_components(), self.n_output(), t)
    }

    pub fn eval_dist(&self, t: f64) -> RealVector {
        sum_at(self.dist_components(), self.n_dist(), t)
    }

    /// Upper bound `Σ ||a_k||` of the reference norm.
    pub fn ref_bound(&self) -> f64 {
        self.ref_amplitudes
            .iter()
            .map(|a| a.iter().map(|x| x * x).sum::<f64>().sqrt())
            .sum()
    }
}

fn components<'a>(
    omegas: &'a [f64],
    amplitudes: &'a [Vec<f64>],
    phases: &'a [f64],
) -> impl Iterator<Item = Component<'a>> {
    omegas.iter().zip(amplitudes).enumerate().map(move |(k, (w, a))| Component {
        omega: *w,
        amplitude: a,
        phase: phases.get(k).copied().unwrap_or(0.0),
    })
}

fn sum_at<'a>(terms: impl Iterator<Item = Component<'a>>, len: usize, t: f64) -> RealVector {
    let mut out = RealVector::zeros(len);
    for term in terms {
        let c = (term.omega * t + term.phase).cos();
        for (o, a) in out.iter_mut().zip(term.amplitude) {
            *o += a * c;
        }
    }
    out
}

fn check_amplitudes(name: &str, amps: &[Vec<f64>], len: usize, width: usize) -> Result<()> {
    if amps.len() != len {
        return Err(Error::InvalidSignals(format!(
            "{name} has {} entries for {len} frequencies",
            amps.len()
        )));
    }
    for (k, a) in amps.iter().enumerate() {
        if a.len() != width {
            return Err(Error::InvalidSignals(format!(
                "{name}[{k}] has length {}, expected {width}",
                a.len()
            )));
        }
        if !a.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidSignals(format!("{name}[{k}] is not finite")));
        }
    }
    Ok(())
}

fn check_phases(name: &str, phases: &[f64], len: usize) -> Result<()> {
    if phases.is_empty() {
        return Ok(());
    }
    if phases.len() != len {
        return Err(Error::InvalidSignals(format!(
            "{name} has {} entries for {len} frequencies",
            phases.len()
        )));
    }
    if let Some(bad) = phases.iter().find(|p| !(**p >= 0.0 && **p < TAU)) {
        return Err(Error::InvalidSignals(format!("{name}: phase {bad} outside [0, 2pi)")));
    }
    Ok(())
}
