use alloc::string::String;
use alloc::vec::Vec;

/// Errors raised by the numerical pipeline.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("input contains NaN or infinite samples")]
    NonFiniteInput,
    #[error("signal carries no spectral power in the band")]
    DegenerateSignal,
    #[error("signal has zero variance")]
    ConstantSignal,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("non-finite value produced by {op}")]
    NonFiniteValue { op: &'static str },
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("invalid band configuration: {0}")]
    InvalidBand(String),
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("epoch {epoch} outside [0, {total}]")]
    EpochOutOfRange { epoch: usize, total: usize },
    #[error("training diverged: non-finite loss for {epochs} consecutive epochs")]
    Diverged { epochs: usize },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
