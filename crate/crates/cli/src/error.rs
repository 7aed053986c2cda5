use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{0}")]
    Config(String),

    #[error("section [{name}] is defined twice (lines {first} and {second})")]
    DuplicateSection { name: String, first: usize, second: usize },

    #[error("[{section}] references undefined {what} `{name}`")]
    DanglingReference { section: String, what: &'static str, name: String },

    #[error("[{section}]: {message}")]
    GridMismatch { section: String, message: String },

    #[error("cyclic definition through [{0}]")]
    Cycle(String),

    #[error("map table: {0}")]
    MapTable(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("report: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Engine(#[from] npt_core::Error),
}

impl CliError {
    /// Usage problems exit with 1; failures inside the engine count as a
    /// negative emergence result and exit with 2.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Engine(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
