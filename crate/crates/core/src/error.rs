use thiserror::Error;

use crate::nets::TrainTrace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An input for which a kernel is undefined (e.g. a zero vector).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("singular kernel: smallest eigenvalue {lambda_min:e} is not positive")]
    SingularKernel { lambda_min: f64 },

    #[error("no activation constant for p = {p_degree}, activation = {activation}")]
    UnsupportedConstant { p_degree: u32, activation: String },

    #[error("label vector leaves the kernel range: residual {residual:e} > {allowed:e}")]
    RangeViolation { residual: f64, allowed: f64 },

    #[error("non-finite loss at sample {sample}")]
    NumericFailure { sample: usize },

    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Divergence {
        epoch: usize,
        loss: f64,
        trace: Box<TrainTrace>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for failures of the numerics rather than of the caller's input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::SingularKernel { .. }
                | Error::RangeViolation { .. }
                | Error::NumericFailure { .. }
                | Error::Divergence { .. }
        )
    }
}
