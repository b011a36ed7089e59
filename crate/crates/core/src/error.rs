use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: expected {expected:?}, got {got:?}")]
    Shape {
        op: &'static str,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("non-finite gradient in tensor `{tensor}` at index {index}")]
    NonFiniteGradient { tensor: String, index: usize },
    #[error("object does not fit inside the canvas")]
    OutOfCanvas,
    #[error("dataset generation failed: {0}")]
    Generation(String),
    #[error("unknown token `{0}`")]
    Vocabulary(String),
    #[error("no frontend features for key `{0}`")]
    FeatureLookup(String),
    #[error("unsupported format version {found} (expected {expected})")]
    FormatVersion { expected: u32, found: u32 },
    #[error("malformed file: {0}")]
    Format(String),
    #[error("undefined ratio: {0}")]
    UndefinedRatio(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Whether the error stems from user configuration rather than a runtime failure.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Shape { .. } | Error::UndefinedRatio(_)
        )
    }
}
