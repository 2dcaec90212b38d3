use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed structural input (non-square or asymmetric adjacency, bad mask length, ...).
    #[error("structural input error: {0}")]
    Structure(String),

    #[error("SMILES parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    /// Shape or hyperparameter mismatch between a model and its inputs.
    #[error("configuration error: {0}")]
    Config(String),

    /// A trace or gradient buffer that no longer matches the graph/model it is used with.
    #[error("internal consistency error: {0}")]
    Consistency(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
