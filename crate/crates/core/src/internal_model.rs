//! The `p`-copy internal model of the exosystem frequencies.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::RealMatrix;
use crate::signals::Frequencies;

/// `G1 = diag(0_p, ω_1 Ω_p, …, ω_q Ω_p)` with `Ω_p = [[0, I_p], [-I_p, 0]]`
/// and `G2 = [I_p, I_p, 0_p, …, I_p, 0_p]^T`.
///
/// Block order is fixed: the constant block first, then each nonzero
/// frequency in ascending order as a (cosine, sine) pair of `p`-blocks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InternalModel {
    #[serde(with = "crate::dense::real")]
    pub g1: RealMatrix,
    #[serde(with = "crate::dense::real")]
    pub g2: RealMatrix,
    pub frequencies: Frequencies,
    pub p: usize,
}

impl InternalModel {
    pub fn new(frequencies: &Frequencies, p: usize) -> Result<Self> {
        if p == 0 {
            return Err(Error::DimensionMismatch("internal model needs p >= 1".into()));
        }
        let dim = p * (2 * frequencies.q() + 1);
        let mut g1 = RealMatrix::zeros(dim, dim);
        let mut g2 = RealMatrix::zeros(dim, p);
        for i in 0..p {
            g2[(i, i)] = 1.0;
        }
        for (k, omega) in frequencies.values().iter().enumerate().skip(1) {
            let start = p * (2 * k - 1);
            for i in 0..p {
                g1[(start + i, start + p + i)] = *omega;
                g1[(start + p + i, start + i)] = -omega;
                g2[(start + i, i)] = 1.0;
            }
        }
        Ok(Self {
            g1,
            g2,
            frequencies: frequencies.clone(),
            p,
        })
    }

    pub fn dim(&self) -> usize {
        self.g1.nrows()
    }

    /// Row range of block `k` (0 for the constant block).
    pub fn block_rows(&self, k: usize) -> std::ops::Range<usize> {
        if k == 0 {
            0..self.p
        } else {
            let start = self.p * (2 * k - 1);
            start..start + 2 * self.p
        }
    }

    /// Checks the structural invariants of a deserialized model.
    pub fn check(&self) -> Result<()> {
        let rebuilt = Self::new(&self.frequencies, self.p)?;
        if rebuilt != *self {
            return Err(Error::MalformedArtifact(
                "internal model does not match its frequency list".into(),
            ));
        }
        Ok(())
    }
}

pub fn build_internal_model(frequencies: &Frequencies, p: usize) -> Result<InternalModel> {
    InternalModel::new(frequencies, p)
}
