use super::{norm1, RealMatrix, EXPM_CAP};
use crate::error::{Error, Result};

/// `exp(M t)` by scaling and squaring with a Padé core.
pub fn matrix_exponential(m: &RealMatrix, t: f64) -> Result<RealMatrix> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "matrix exponential needs a square matrix, got {:?}",
            m.shape()
        )));
    }
    if !t.is_finite() {
        return Err(Error::Overflow { norm: f64::INFINITY, cap: EXPM_CAP });
    }
    let scaled = m * t;
    let norm = norm1(&scaled);
    if norm > EXPM_CAP {
        return Err(Error::Overflow { norm, cap: EXPM_CAP });
    }
    if norm == 0.0 {
        return Ok(RealMatrix::identity(m.nrows(), m.nrows()));
    }
    Ok(scaled.exp())
}
