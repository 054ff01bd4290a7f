//! Annotation service for active adaptation rounds.
//!
//! The harness publishes each round's queries to a [`RoundStore`]; the
//! HTTP endpoints in [`server`] let an annotator read them and post labels;
//! [`ServiceLabeler`] blocks the harness until the round is fully labeled.
//!
//! | method | path | success | errors |
//! |---|---|---|---|
//! | GET | `/rounds/current` | [`RoundStatus`] | 404 no round |
//! | GET | `/rounds/current/queries` | [`QueryList`] | 404 no round |
//! | POST | `/labels` ([`LabelSubmission`]) | [`LabelAck`] | 409 duplicate, 422 unknown id or label |
//!
//! Error bodies are [`ErrorBody`]. The journal format is described in [`journal`].

pub mod error;
pub mod journal;
mod labeler;
pub mod records;
pub mod server;
mod store;

pub use error::{Result, ServiceError};
pub use labeler::ServiceLabeler;
pub use records::{
    ErrorBody, LabelAck, LabelSubmission, Phase, QueryList, QueryRecord, QueryStatus, RoundStatus,
    SCHEMA_VERSION,
};
pub use server::{router, ServiceHandle};
pub use store::RoundStore;
