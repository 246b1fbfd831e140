use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TslError {
    #[error("edge mass {ratio:.3e} exceeds tolerance {tol:.1e} (relative to max |value|)")]
    EdgeMass { ratio: f64, tol: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("out of range: {0}")]
    Range(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("moment routes disagree at order {order}: quadrature {quadrature:.6e}, spectral {spectral:.6e}")]
    MomentDisagreement { order: usize, quadrature: f64, spectral: f64 },
    #[error("kernel is degenerate: {0}")]
    DegenerateKernel(String),
    #[error("unknown kernel `{0}`")]
    UnknownKernel(String),
    #[error("scale {y_min:.3e} is below the resolvable limit {limit:.3e}")]
    ScaleResolution { y_min: f64, limit: f64 },
    #[error("window meets the support of f: {0}")]
    SupportOverlap(String),
    #[error("calibration is anisotropic: deviation {deviation:.3e} > {tol:.1e}")]
    AnisotropicCalibration { deviation: f64, tol: f64 },
    #[error("calibration constant vanishes (|c| = {0:.3e})")]
    ZeroCalibration(f64),
    #[error("denominator {value:.3e} at radius {radius:.4} underflows")]
    DivisionUnderflow { value: f64, radius: f64 },
    #[error("ladder end slices are too large: {0}")]
    LadderTruncation(String),
    #[error("hypothesis ({condition}) fails: {witness}")]
    Hypothesis { condition: String, witness: String },
    #[error("symbol violates the cone condition along direction {direction:?}")]
    ConeViolation { direction: Vec<f64> },
    #[error("support outside the cone: {0}")]
    SupportViolation(String),
    #[error("divergent: {0}")]
    Divergent(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for TslError {
    fn from(e: std::io::Error) -> Self {
        TslError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, TslError>;
