//! Error type shared by every module of the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {left}x{left} vs {right}x{right} points")]
    GridMismatch { left: usize, right: usize },

    #[error("conjugate symmetry violated: imaginary residue {residue:.3e} exceeds {tol:.3e}")]
    SymmetryViolation { residue: f64, tol: f64 },

    #[error("negative duration t = {0}")]
    NegativeDuration(f64),

    #[error("unsupported Sobolev norm (k = {k}, p = {p})")]
    UnsupportedNorm { k: usize, p: String },

    #[error("flow is not divergence free: |div v|_inf = {linf:.3e} exceeds {tol:.3e}")]
    DivergentFlow { linf: f64, tol: f64 },

    #[error("non-finite field value at step {step}")]
    Divergence { step: usize },

    #[error("sample time {t} is not an integer multiple of the reference step {tau_ref}")]
    MisalignedSampleTime { t: f64, tau_ref: f64 },

    #[error("degenerate order fit: {0}")]
    DegenerateFit(String),

    #[error("degenerate stability probe: the two initial states coincide")]
    DegenerateProbe,

    #[error("{0} is not valid here: {1}")]
    InvalidExpansionId(String, String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("snapshot format error: {0}")]
    SnapshotFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
