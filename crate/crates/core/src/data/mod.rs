//! Samples, synthetic domain families, and delimited-text ingestion.

mod csv;
mod family;
mod sample;
mod shift;
mod split;

pub use self::csv::{load_csv, read_pool, write_csv, write_pool};
pub use family::{gen_family, BaseDistribution, DomainFamily, DomainSpec, Role};
pub use sample::{stack_features, DomainPool, Sample, SampleId};
pub use shift::{Shift, ShiftSpec};
pub use split::split;
