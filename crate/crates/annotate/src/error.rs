use ssada_core::data::SampleId;
use thiserror::Error;

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("no active round")]
    NoRound,

    #[error("a different round is still awaiting labels")]
    RoundBusy,

    #[error("sample {0} is not queried in the current round")]
    UnknownSample(SampleId),

    #[error("label {0} is not 0 or 1")]
    BadLabel(i64),

    #[error("sample {sample_id} already labeled {stored}")]
    Duplicate { sample_id: SampleId, stored: u8 },

    #[error("timed out after {0:?} waiting for labels")]
    Timeout(std::time::Duration),

    #[error("journal: {0}")]
    Journal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
