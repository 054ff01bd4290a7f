use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::scalar::Scalar;

/// Stable sample identifier, unique across a family of domains.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct SampleId(pub u64);

impl fmt::Display for SampleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample<T> {
    pub id: SampleId,
    pub features: Vec<T>,
    /// 1 = positive class, 0 = negative, `None` = unlabeled.
    pub label: Option<u8>,
    pub domain: String,
}

/// Samples of one domain.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainPool<T> {
    pub name: String,
    pub samples: Vec<Sample<T>>,
}

impl<T: Scalar> DomainPool<T> {
    pub fn new(name: impl Into<String>, samples: Vec<Sample<T>>) -> Result<Self> {
        let pool = Self {
            name: name.into(),
            samples,
        };
        pool.validate()?;
        Ok(pool)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.samples.len());
        let dim = self.samples.first().map(|s| s.features.len());
        for s in &self.samples {
            if !seen.insert(s.id) {
                return Err(Error::Data(format!("duplicate sample id {}", s.id)));
            }
            if Some(s.features.len()) != dim {
                return Err(Error::Data(format!(
                    "sample {} has {} features, expected {}",
                    s.id,
                    s.features.len(),
                    dim.unwrap_or(0)
                )));
            }
            if let Some(l) = s.label {
                if l > 1 {
                    return Err(Error::Data(format!("sample {} has label {l}", s.id)));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.samples.first().map(|s| s.features.len())
    }

    pub fn labeled(&self) -> impl Iterator<Item = &Sample<T>> {
        self.samples.iter().filter(|s| s.label.is_some())
    }

    pub fn unlabeled(&self) -> impl Iterator<Item = &Sample<T>> {
        self.samples.iter().filter(|s| s.label.is_none())
    }

    pub fn positives(&self) -> usize {
        self.samples.iter().filter(|s| s.label == Some(1)).count()
    }

    pub fn ids(&self) -> Vec<SampleId> {
        self.samples.iter().map(|s| s.id).collect()
    }

    pub fn get(&self, id: SampleId) -> Option<&Sample<T>> {
        self.samples.iter().find(|s| s.id == id)
    }

    /// Feature matrix, one row per sample.
    pub fn features(&self) -> Result<Tensor<T>> {
        let rows: Vec<&[T]> = self.samples.iter().map(|s| s.features.as_slice()).collect();
        if rows.is_empty() {
            return Ok(Tensor::zeros(&[0, 0]));
        }
        Tensor::from_rows(&rows)
    }

    /// Labels of a fully labeled pool.
    pub fn labels(&self) -> Result<Vec<u8>> {
        self.samples
            .iter()
            .map(|s| {
                s.label
                    .ok_or_else(|| Error::Data(format!("sample {} is unlabeled", s.id)))
            })
            .collect()
    }

    /// Copy with every label removed.
    pub fn without_labels(&self) -> Self {
        Self {
            name: self.name.clone(),
            samples: self
                .samples
                .iter()
                .map(|s| Sample {
                    label: None,
                    ..s.clone()
                })
                .collect(),
        }
    }
}

/// Stacks the features of several pools into one matrix.
pub fn stack_features<T: Scalar>(pools: &[&DomainPool<T>]) -> Result<Tensor<T>> {
    let rows: Vec<&[T]> = pools
        .iter()
        .flat_map(|p| p.samples.iter().map(|s| s.features.as_slice()))
        .collect();
    if rows.is_empty() {
        return Err(Error::Data("no samples to stack".into()));
    }
    Tensor::from_rows(&rows)
}
