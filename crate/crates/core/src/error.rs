use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("precision entry {index} is not positive ({value})")]
    SingularPrecision { index: usize, value: f64 },
    #[error("covariance entry {index} is negative ({value})")]
    InvalidCovariance { index: usize, value: f64 },
    #[error("covariance entry {index} is not positive ({value})")]
    SingularCovariance { index: usize, value: f64 },
    #[error("non-finite result in {0}")]
    Overflow(&'static str),
    #[error("embedding has zero norm")]
    DegenerateEmbedding,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("missing embeddings for {} id(s): {}", .0.len(), .0.join(", "))]
    MissingEmbeddings(Vec<String>),
    #[error("missing labels for {} id(s): {}", .0.len(), .0.join(", "))]
    MissingLabels(Vec<String>),
    #[error("estimation failed: {0}")]
    Estimation(String),
    #[error("metric undefined: {0}")]
    Metric(String),
    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),
    #[error("trial sampling failed: {0}")]
    Sampling(String),
}

pub(crate) fn check_len(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        })
    }
}

pub(crate) fn check_finite(context: &'static str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(context))
    }
}
