use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("validation: {0}")]
    Validation(String),

    #[error("generation: {0}")]
    Generation(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("{path}:{line}: {detail}")]
    ParseLine {
        path: String,
        line: usize,
        detail: String,
    },

    #[error("feature file parse error at byte {offset}: {detail}")]
    FeatureParse { offset: u64, detail: String },

    #[error("training failed at step {step}: {detail}")]
    Training { step: u64, detail: String },

    #[error("argument: {0}")]
    Argument(String),

    #[error(transparent)]
    Tensor(#[from] srg_tensor::TensorError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;
