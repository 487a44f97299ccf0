use thiserror::Error;

/// Errors produced by tensor construction, tape operations, and checkpoint I/O.
#[derive(Debug, Error)]
pub enum TensorError {
    /// Two operands disagree on a dimension. `axis` names the offending axis
    /// in the reported operation's own terms (e.g. "input channels", "time").
    #[error("{op}: dimension mismatch on {axis}: expected {expected}, got {got}")]
    DimMismatch {
        op: &'static str,
        axis: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("{op}: {detail}")]
    InvalidArgument { op: &'static str, detail: String },

    #[error("checkpoint parse error at byte {offset}: {detail}")]
    CheckpointParse { offset: u64, detail: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TensorError>;
