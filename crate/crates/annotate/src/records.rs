//! Wire types. Field names are part of the public contract; bump
//! [`SCHEMA_VERSION`] on any change.

use serde::{Deserialize, Serialize};
use ssada_core::data::SampleId;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryStatus {
    Pending,
    Labeled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub sample_id: SampleId,
    pub round: usize,
    pub domain: String,
    pub features: Vec<f64>,
    pub status: QueryStatus,
    pub label: Option<u8>,
    pub annotator: Option<String>,
}

/// Where the workflow stands for the current round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Queries are out; the harness is blocked on labels.
    AwaitingLabels,
    /// Every query is labeled and the harness has resumed training.
    Training,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundStatus {
    pub schema_version: u32,
    pub round: usize,
    pub budget: usize,
    pub pending: usize,
    pub labeled: usize,
    pub phase: Phase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryList {
    pub schema_version: u32,
    pub round: usize,
    pub queries: Vec<QueryRecord>,
}

/// Body of `POST /labels`. The label is kept wide so that out-of-range
/// values reach validation instead of failing deserialization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSubmission {
    pub sample_id: SampleId,
    pub label: i64,
    pub annotator: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelAck {
    pub schema_version: u32,
    pub sample_id: SampleId,
    pub label: u8,
    pub pending: usize,
    pub labeled: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub schema_version: u32,
    pub error: String,
    pub message: String,
    /// On a duplicate submission, the label the server already holds.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub stored_label: Option<u8>,
}
