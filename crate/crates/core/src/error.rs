use thiserror::Error;

pub type Result<T> = std::result::Result<T, RomError>;

#[derive(Debug, Error)]
pub enum RomError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("rank error: {0}")]
    Rank(String),
    #[error("stability error: {0}")]
    Stability(String),
    #[error("training diverged: {0}")]
    Training(String),
    #[error("problem definition error: {0}")]
    Problem(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<RomError>,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl RomError {
    /// Tags an error with the pipeline stage that produced it.
    pub fn at(self, stage: &'static str) -> RomError {
        RomError::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// The innermost error, skipping stage tags.
    pub fn root(&self) -> &RomError {
        match self {
            RomError::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            RomError::Numerical(_) | RomError::Rank(_) | RomError::Stability(_) | RomError::Training(_) => 3,
            _ => 2,
        }
    }
}
