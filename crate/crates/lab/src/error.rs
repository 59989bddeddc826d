use std::path::PathBuf;

use birkhoff_core::calibration::CalibrationError;
use birkhoff_core::curve::CurveError;
use birkhoff_core::flow::FlowError;
use birkhoff_core::grid::GridError;
use birkhoff_core::hamiltonian::HamiltonianError;
use birkhoff_core::lax_oleinik::LaxError;
use birkhoff_core::spectral::SpectralError;
use birkhoff_core::trig::TrigError;

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("config: {0}")]
    Config(String),
    #[error("i/o failure at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed {what} at line {line}: {msg}")]
    Parse { what: &'static str, line: usize, msg: String },
    #[error("fixed point not reached: residual {residual:e} after {iterations} periods")]
    FixedPointNotReached { residual: f64, iterations: usize },
    #[error("experiment precondition: {0}")]
    Precondition(String),
    #[error(transparent)]
    Trig(#[from] TrigError),
    #[error(transparent)]
    Hamiltonian(#[from] HamiltonianError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Curve(#[from] CurveError),
    #[error(transparent)]
    Lax(#[from] LaxError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl LabError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code; every error maps to ≥ 10.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 10,
            Self::Io { .. } | Self::Parse { .. } | Self::Json(_) => 11,
            Self::Precondition(_) => 12,
            _ => 13,
        }
    }
}
