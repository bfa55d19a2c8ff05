use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid rating scale [{min}, {max}]")]
    InvalidScale { min: f64, max: f64 },

    #[error("rating {rating} for ({user}, {item}) is outside the scale [{min}, {max}]")]
    RatingOutOfScale {
        user: String,
        item: String,
        rating: f64,
        min: f64,
        max: f64,
    },

    #[error("duplicate rating for ({user}, {item})")]
    DuplicateRating { user: String, item: String },

    /// Malformed input file; `line` is 1-based and counts the header.
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("unknown user {0}")]
    UnknownUser(String),

    #[error("unknown item {0}")]
    UnknownItem(String),

    #[error("user {0} has no ratings")]
    NoRatings(String),

    /// Invalid parameter combination or out-of-range hyperparameter.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("training diverged at epoch {epoch} with learning rate {learning_rate}")]
    Diverged { epoch: usize, learning_rate: f64 },

    #[error("{0}")]
    Empty(&'static str),

    #[error("cannot split: {0}")]
    Split(String),

    #[error("features: {0}")]
    Features(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
