use thiserror::Error;

use crate::volterra::FreeBoundaryTrajectory;

pub type Result<T, E = StefanError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum StefanError {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The caller violated a structural precondition (grid shape, node lookup, ...).
    #[error("usage error: {0}")]
    Usage(String),

    /// `theta_0` vanishes or changes sign on a path of integration of `1/theta_0`.
    #[error("singular transform: theta_0 vanishes or changes sign on [{lo}, {hi}]")]
    SingularTransform { lo: f64, hi: f64 },

    /// `1 + 1/(2 beta2)` is too close to zero to invert.
    #[error("degenerate prefactor 1 + 1/(2*beta2) = {0:e}")]
    DegeneratePrefactor(f64),

    #[error("out of regime: {0}")]
    OutOfRegime(String),

    /// Picard iteration failed; the trajectory computed so far is attached.
    #[error("Picard iteration did not converge at step {step} (t = {t}) after {iterations} iterations, last change {last_change:e}")]
    NonConvergence {
        step: usize,
        t: f64,
        iterations: usize,
        last_change: f64,
        partial: Box<FreeBoundaryTrajectory>,
    },

    /// Solver settings that cannot work together (e.g. an unstable explicit step).
    #[error("configuration error: {0}")]
    Settings(String),

    /// Bad configuration file; `line` is 0 when no single line is at fault.
    #[error("configuration error{}: {message}", at_line(*line))]
    Config { line: usize, message: String },

    /// Malformed input data file.
    #[error("data error in {path}{}: {message}", at_line(*line))]
    Data { path: String, line: usize, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn at_line(line: usize) -> String {
    if line == 0 {
        String::new()
    } else {
        format!(" at line {line}")
    }
}

impl StefanError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        StefanError::Domain(msg.into())
    }

    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        StefanError::Usage(msg.into())
    }

    pub(crate) fn config(line: usize, msg: impl Into<String>) -> Self {
        StefanError::Config {
            line,
            message: msg.into(),
        }
    }

    /// True for failures of the numerics themselves rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, StefanError::NonConvergence { .. } | StefanError::SingularTransform { .. })
    }
}
