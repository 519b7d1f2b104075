use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invalid model spec: {0}")]
    Spec(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("parameter-count search failed: {message} (closest: {closest_count} params at width {closest_width})")]
    Search {
        message: String,
        closest_width: usize,
        closest_count: usize,
    },

    #[error("malformed file: {0}")]
    Format(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: loss={loss}, max |param|={max_abs_param}")]
    Diverged {
        epoch: usize,
        batch: usize,
        loss: f64,
        max_abs_param: f64,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
