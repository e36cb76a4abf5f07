use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("graph error: {0}")]
    Graph(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("{module}::{operation}: {source}")]
    Stage {
        module: &'static str,
        operation: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Wraps an error with the module and operation that produced it.
    pub fn in_stage(self, module: &'static str, operation: &'static str) -> Error {
        Error::Stage {
            module,
            operation,
            source: Box::new(self),
        }
    }

    /// Process exit code: 2 usage, 3 data/schema, 4 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Config(_) => 2,
            Error::Schema(_) | Error::Data(_) | Error::Graph(_) | Error::Io(_) | Error::Csv(_) => 3,
            Error::Numeric(_) => 4,
            Error::Stage { source, .. } => source.exit_code(),
        }
    }
}

pub trait StageExt<T> {
    fn stage(self, module: &'static str, operation: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, module: &'static str, operation: &'static str) -> Result<T> {
        self.map_err(|e| e.in_stage(module, operation))
    }
}
