use thiserror::Error;

#[derive(Debug, Error)]
pub enum SdpError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("solver failure at iteration {iteration}: {reason} (pres={pres:.3e}, dres={dres:.3e}, gap={gap:.3e})")]
    SolverFailure {
        iteration: usize,
        reason: String,
        pres: f64,
        dres: f64,
        gap: f64,
    },

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, SdpError>;
