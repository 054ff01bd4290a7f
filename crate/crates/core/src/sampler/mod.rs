//! Acquisition strategies that pick which unlabeled target samples to query.
//!
//! Domain probabilities follow one convention throughout: `domain_prob` is the
//! domain classifier's probability that a sample comes from the **source**
//! domain. AADA's diversity weight `(1 - d) / d` is large for samples that look
//! like target data; flipping the convention inverts it.

mod kmeans;
mod strategies;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::SampleId;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use strategies::{
    badge_embedding, select_aada, select_aada_proportional, select_badge, select_clue,
    select_uniform,
};

/// Bounds applied to the domain probability before forming `(1 - d) / d`.
pub const DOMAIN_PROB_CLAMP: f64 = 1e-6;

/// Per-sample model outputs consumed by the strategies.
#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionInput<T> {
    pub id: SampleId,
    /// Feature extractor output.
    pub features: Vec<T>,
    /// Class-classifier softmax.
    pub class_probs: Vec<T>,
    /// Probability of the source domain.
    pub domain_prob: T,
}

/// Checks probability ranges, normalisation and id uniqueness.
pub fn validate_inputs<T: Scalar>(inputs: &[AcquisitionInput<T>]) -> Result<()> {
    let tol = T::of(1e-9).max(T::epsilon() * T::of(16.0));
    let mut ids = HashSet::with_capacity(inputs.len());
    for x in inputs {
        if !ids.insert(x.id) {
            return Err(Error::invalid(format!("duplicate sample id {}", x.id)));
        }
        let in_unit = |v: T| v >= T::zero() && v <= T::one();
        if !in_unit(x.domain_prob) || !x.class_probs.iter().all(|&p| in_unit(p)) {
            return Err(Error::invalid(format!(
                "probabilities of sample {} outside [0, 1]",
                x.id
            )));
        }
        let sum: T = x.class_probs.iter().copied().sum();
        if (sum - T::one()).abs() > tol {
            return Err(Error::invalid(format!(
                "class probabilities of sample {} sum to {sum}",
                x.id
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Uniform,
    Aada,
    Clue,
    Badge,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::Uniform, Strategy::Aada, Strategy::Clue, Strategy::Badge];

    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::Uniform => "uniform",
            Strategy::Aada => "aada",
            Strategy::Clue => "clue",
            Strategy::Badge => "badge",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown strategy {s:?}")))
    }
}

/// Ids chosen for labeling in one round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuerySet {
    pub ids: Vec<SampleId>,
    pub strategy: Strategy,
    pub round: usize,
}

impl QuerySet {
    pub fn new(ids: Vec<SampleId>, strategy: Strategy) -> Self {
        Self {
            ids,
            strategy,
            round: 0,
        }
    }

    pub fn with_round(mut self, round: usize) -> Self {
        self.round = round;
        self
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Shannon entropy `-sum p ln p` (zero terms contribute nothing).
pub fn entropy<T: Scalar>(p: &[T]) -> Result<T> {
    if p.iter().any(|&v| v < T::zero() || v.is_nan()) {
        return Err(Error::invalid("entropy of negative probabilities"));
    }
    Ok(-p
        .iter()
        .filter(|&&v| v > T::zero())
        .map(|&v| v * v.ln())
        .sum::<T>())
}

/// AADA score `((1 - d) / d) * H(p)` with `d` the source-domain probability,
/// clamped to `[1e-6, 1 - 1e-6]`.
pub fn score_aada<T: Scalar>(domain_prob: T, class_probs: &[T]) -> Result<T> {
    let eps = T::of(DOMAIN_PROB_CLAMP);
    let d = domain_prob.max(eps).min(T::one() - eps);
    Ok((T::one() - d) / d * entropy(class_probs)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entropy_examples() {
        assert!((entropy(&[0.5f64, 0.5]).unwrap() - 0.693_147_180_559_945_3).abs() < 1e-15);
        assert_eq!(entropy(&[1.0f64, 0.0]).unwrap(), 0.0);
        let h = entropy(&[0.9f64, 0.1]).unwrap();
        let by_hand = -0.9f64 * 0.9f64.ln() - 0.1 * 0.1f64.ln();
        assert!((h - by_hand).abs() < 1e-15);
        assert!((h - 0.325_083).abs() < 1e-6);
        assert!(entropy(&[1.2f64, -0.2]).is_err());
    }

    #[test]
    fn aada_examples() {
        let p = [0.7f64, 0.3];
        assert_eq!(score_aada(0.5, &p).unwrap(), entropy(&p).unwrap());
        assert_eq!(score_aada(0.01, &[1.0f64, 0.0]).unwrap(), 0.0);
        let s = score_aada(0.2f64, &[0.5, 0.5]).unwrap();
        assert!((s - 4.0 * std::f64::consts::LN_2).abs() < 1e-12);
        assert!((s - 2.772_589).abs() < 1e-6);
    }

    #[test]
    fn aada_clamps_extremes() {
        let p = [0.5f64, 0.5];
        assert!(score_aada(0.0, &p).unwrap().is_finite());
        assert_eq!(score_aada(1.0, &p).unwrap(), score_aada(1.0 - 1e-6, &p).unwrap());
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.as_str().parse::<Strategy>().unwrap(), s);
        }
        assert!("margin".parse::<Strategy>().is_err());
    }

    #[test]
    fn input_validation() {
        let ok = AcquisitionInput {
            id: SampleId(1),
            features: vec![0.0],
            class_probs: vec![0.25f64, 0.75],
            domain_prob: 0.5,
        };
        assert!(validate_inputs(&[ok.clone()]).is_ok());
        assert!(validate_inputs(&[ok.clone(), ok.clone()]).is_err());
        let bad = AcquisitionInput {
            class_probs: vec![0.3, 0.3],
            ..ok.clone()
        };
        assert!(validate_inputs(&[bad]).is_err());
        let bad = AcquisitionInput {
            domain_prob: 1.5,
            ..ok
        };
        assert!(validate_inputs(&[bad]).is_err());
    }
}
