use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("design error: {0}")]
    Design(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("abstraction integrity error: {0}")]
    Abstraction(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("strategy query error: {0}")]
    Query(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("simulation left the winning set: {0}")]
    Soundness(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }
}
