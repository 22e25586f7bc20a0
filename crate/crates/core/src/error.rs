use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is singular to working precision (pivot {pivot:.3e}, threshold {threshold:.3e})")]
    SingularMatrix { pivot: f64, threshold: f64 },

    #[error("{what} did not converge within {iterations} iterations")]
    ConvergenceFailure { what: &'static str, iterations: usize },

    #[error("matrix is not Hurwitz (spectral abscissa {abscissa:.6e})")]
    NotHurwitz { abscissa: f64 },

    #[error("pair is not stabilizable: {0}")]
    NotStabilizable(String),

    #[error("pair is not detectable: {0}")]
    NotDetectable(String),

    #[error("matrix exponential argument too large (norm {norm:.3e} exceeds cap {cap:.3e})")]
    Overflow { norm: f64, cap: f64 },

    #[error("invalid plant configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid frequencies: {0}")]
    InvalidFrequencies(String),

    #[error("invalid signal specification: {0}")]
    InvalidSignals(String),

    #[error("resolvent pole at lambda = {re}{im:+}i")]
    ResolventPole { re: f64, im: f64 },

    #[error("assembled matrix has non-negligible imaginary part ({residue:.3e})")]
    NonRealResidue { residue: f64 },

    #[error("transmission zero(s) at omega = {frequencies:?}")]
    TransmissionZero { frequencies: Vec<f64> },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("time step {step} rejected: {reason}")]
    StepRejected { step: usize, reason: String },

    #[error("plant hash mismatch: controller was designed for plant {expected}, config describes plant {found}")]
    HashMismatch { expected: String, found: String },

    #[error("malformed controller file: {0}")]
    MalformedArtifact(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn pole(lambda: num_complex::Complex64) -> Self {
        Error::ResolventPole {
            re: lambda.re,
            im: lambda.im,
        }
    }
}
