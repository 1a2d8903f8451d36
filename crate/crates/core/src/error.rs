use std::path::PathBuf;

/// Errors raised by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unknown domain tag `{0}`")]
    UnknownDomain(String),
    #[error("invalid predicate manifest: {0}")]
    Manifest(String),
    #[error("invalid pattern: {0}")]
    Pattern(String),
    #[error("cannot render question: {0}")]
    Render(String),
    #[error("missing credentials: environment variable {var} is not set (model `{model}`)")]
    MissingCredentials { model: String, var: String },
    #[error("unknown provider for model `{0}`")]
    UnknownProvider(String),
    #[error("provider error: {0}")]
    Provider(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("slope unidentified: {0}")]
    Unidentified(String),
    #[error("singular design matrix; collinear columns: {}", .0.join(", "))]
    Singular(Vec<String>),
    #[error("root not bracketed: {0}")]
    NotBracketed(String),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
