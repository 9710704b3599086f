use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("index {index} out of bounds for dataset of {len}")]
    IndexOutOfBounds { index: usize, len: usize },

    #[error("rejection sampler exhausted {0} draws; acceptance region is pathological")]
    PathologicalParams(u64),

    #[error("assumption violated: b(xi) = {gain} < b0 = {b0}")]
    GainBelowBound { gain: f64, b0: f64 },

    #[error("signal left the funnel {}: |s| = {s_abs} >= psi = {psi}", when(*.t))]
    FunnelViolation { t: f64, s_abs: f64, psi: f64 },

    #[error("integration diverged at t = {0}")]
    IntegrationDiverged(f64),

    #[error("noisy boundary non-positive {}: psi + y = {value}", when(*.t))]
    MechanismInvalid { t: f64, value: f64 },

    #[error("privacy bound degenerate: {0}")]
    PrivacyDegenerate(String),
}

impl Error {
    /// Machine-parsable category used by the command-line front end.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_)
            | Error::DimensionMismatch { .. }
            | Error::IndexOutOfBounds { .. }
            | Error::PathologicalParams(_)
            | Error::GainBelowBound { .. } => "config",
            Error::FunnelViolation { .. } => "funnel-violation",
            Error::IntegrationDiverged(_) => "integration-diverged",
            Error::MechanismInvalid { .. } => "mechanism-invalid",
            Error::PrivacyDegenerate(_) => "privacy-degenerate",
        }
    }
}

// NaN marks a check made outside a simulation
fn when(t: f64) -> String {
    if t.is_nan() {
        "for worst-case noise".into()
    } else {
        format!("at t = {t}")
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
