use alloc::string::String;

/// Errors raised by the core library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("index {index} out of range for {what} of size {size}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        size: usize,
    },
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("empty step")]
    EmptyStep,
    #[error("empty segment")]
    EmptySegment,
    #[error("empty stream")]
    EmptyStream,
    #[error("invalid recipe {id}: {reason}")]
    InvalidRecipe { id: String, reason: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite gradient in {0}")]
    NonFiniteGradient(String),
    #[error("non-finite loss at epoch {epoch}, recipe {recipe}")]
    NonFiniteLoss { epoch: usize, recipe: String },
    #[error("no trainable recipes")]
    NoTrainableRecipes,
    #[error("missing parameter {0}")]
    MissingParam(String),
}

pub type Result<T> = core::result::Result<T, Error>;
