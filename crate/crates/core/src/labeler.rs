use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::data::{DomainPool, SampleId};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One queried sample as shown to an annotator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryItem {
    pub sample_id: SampleId,
    pub domain: String,
    pub features: Vec<f64>,
}

/// A round's worth of queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRequest {
    pub round: usize,
    pub items: Vec<QueryItem>,
}

impl LabelRequest {
    pub fn from_pool<T: Scalar>(round: usize, pool: &DomainPool<T>, ids: &[SampleId]) -> Result<Self> {
        let by_id: HashMap<SampleId, usize> =
            pool.samples.iter().enumerate().map(|(i, s)| (s.id, i)).collect();
        let items = ids
            .iter()
            .map(|id| {
                let s = &pool.samples[*by_id
                    .get(id)
                    .ok_or_else(|| Error::Labeler(format!("queried id {id} not in pool {}", pool.name)))?];
                Ok(QueryItem {
                    sample_id: *id,
                    domain: s.domain.clone(),
                    features: s.features.iter().map(|v| v.as_f64()).collect(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { round, items })
    }
}

/// Resolves labels for a round of queries.
pub trait Labeler {
    /// Returns exactly one binary label per requested id.
    fn resolve(&mut self, request: &LabelRequest) -> Result<BTreeMap<SampleId, u8>>;
}

/// Answers from stored ground truth, instantly.
#[derive(Debug, Clone, Default)]
pub struct OracleLabeler {
    truth: HashMap<SampleId, u8>,
}

impl OracleLabeler {
    pub fn new<'a, T: Scalar>(pools: impl IntoIterator<Item = &'a DomainPool<T>>) -> Self {
        let truth = pools
            .into_iter()
            .flat_map(|p| p.samples.iter())
            .filter_map(|s| s.label.map(|l| (s.id, l)))
            .collect();
        Self { truth }
    }
}

impl Labeler for OracleLabeler {
    fn resolve(&mut self, request: &LabelRequest) -> Result<BTreeMap<SampleId, u8>> {
        request
            .items
            .iter()
            .map(|q| {
                self.truth
                    .get(&q.sample_id)
                    .map(|&l| (q.sample_id, l))
                    .ok_or_else(|| Error::Labeler(format!("no ground truth for {}", q.sample_id)))
            })
            .collect()
    }
}
