use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error in {field}: {message}")]
    Format { field: String, message: String },

    #[error("size mismatch: expected {expected} bytes, found {actual}")]
    SizeMismatch { expected: usize, actual: usize },

    #[error("index out of range: {0}")]
    Index(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    #[error("external segmenter: {message} (payload: {excerpt:?})")]
    External { message: String, excerpt: String },

    #[error("no lesion found: {0}")]
    NoLesion(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn format(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format { field: field.into(), message: message.into() }
    }

    pub fn contract(message: impl Into<String>) -> Self {
        Error::Contract(message.into())
    }

    pub fn external(message: impl Into<String>, payload: &str) -> Self {
        let excerpt: String = payload.chars().take(120).collect();
        Error::External { message: message.into(), excerpt }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context { context: context.into(), source: Box::new(self) }
    }

    /// Innermost error, skipping any context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }
}
