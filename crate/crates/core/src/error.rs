use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid probability {name} = {value}")]
    InvalidProbability { name: &'static str, value: f64 },

    #[error("row {row} is not a distribution (sum = {sum})")]
    NotStochastic { row: String, sum: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid MDP: {0}")]
    InvalidMdp(String),

    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("unknown setting `{0}`")]
    UnknownSetting(String),

    #[error("unknown algorithm `{0}`")]
    UnknownAlgorithm(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("linear system is singular: {0}")]
    Singular(String),

    #[error("variance function does not exist: {0}")]
    VarianceUndefined(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
