//! Error type shared by all modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix {s} is not skew-symmetric at entry ({i},{j})")]
    NotSkewSymmetric { s: usize, i: usize, j: usize },
    #[error("the vertical matrices are linearly dependent")]
    LinearlyDependent,
    #[error("dimension out of range: {0}")]
    DimensionOutOfRange(String),
    #[error("bad parameters: {0}")]
    BadParams(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("dilation factor must be positive, got {0}")]
    NonpositiveLambda(f64),
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("singular coordinate-change matrix")]
    SingularMatrix,
    #[error("point outside the field domain: {0}")]
    OutOfDomain(String),
    #[error("degenerate pair: zero shift quantity with |dphi| = {dphi}")]
    DegeneratePair { dphi: f64 },
    #[error("translated domain does not meet the field domain")]
    EmptyTranslatedDomain,
    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),
    #[error("test-function support is not contained in the domain")]
    SupportNotContained,
    #[error("X_1 f vanishes at the evaluation point")]
    VanishingX1f,
    #[error("initial point leaves the domain immediately")]
    ImmediateExit,
    #[error("extremal-solution approximation did not converge (gap {gap:e} > {tol:e})")]
    NonConvergent { gap: f64, tol: f64 },
    #[error("no vertical component is coupled to the field (all b_j1 vanish)")]
    NoReferenceComponent,
    #[error("curve is not parameterized over [0,1]")]
    CurveNotOnUnitInterval,
    #[error("group does not satisfy the one-coupled-component condition")]
    SettingViolated,
    #[error("curve family crossing detected beyond tolerance")]
    NonMonotoneFamily,
    #[error("mollifier kernel wider than the label-domain margin")]
    KernelTooWide,
    #[error("monotone inversion failed (margin below threshold)")]
    InversionFailure,
    #[error("configuration error: {0}")]
    ConfigError(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("toml parse error: {0}")]
    TomlDe(#[from] toml::de::Error),
    #[error("toml write error: {0}")]
    TomlSer(#[from] toml::ser::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
