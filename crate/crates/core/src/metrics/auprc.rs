use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Scored binary predictions; `labels[i]` is 1 for the positive class.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedPredictions<T> {
    scores: Vec<T>,
    labels: Vec<u8>,
    positives: usize,
}

impl<T: Scalar> RankedPredictions<T> {
    pub fn new(scores: Vec<T>, labels: Vec<u8>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::shape(format!(
                "{} scores for {} labels",
                scores.len(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::invalid(format!("label {bad} is not 0 or 1")));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("prediction scores".into()));
        }
        let positives = labels.iter().filter(|&&l| l == 1).count();
        Ok(Self {
            scores,
            labels,
            positives,
        })
    }

    pub fn positives(&self) -> usize {
        self.positives
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn positive_ratio(&self) -> Option<T> {
        (!self.is_empty()).then(|| T::of_usize(self.positives) / T::of_usize(self.len()))
    }
}

/// Average precision over the ranking induced by descending score.
///
/// Samples sharing a score form a block; every positive in a block is credited
/// with the precision measured at the end of that block. With distinct scores
/// this is the mean, over positives, of precision at each positive's rank. A
/// constant score therefore yields exactly the positive ratio.
pub fn auprc<T: Scalar>(preds: &RankedPredictions<T>) -> Result<T> {
    if preds.positives == 0 {
        return Err(Error::UndefinedMetric(
            "average precision needs at least one positive label".into(),
        ));
    }
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| {
        preds.scores[b]
            .partial_cmp(&preds.scores[a])
            .expect("scores are finite")
    });
    let total_pos = T::of_usize(preds.positives);
    let mut ap = T::zero();
    let mut seen = 0usize;
    let mut tp = 0usize;
    let mut i = 0;
    while i < order.len() {
        let score = preds.scores[order[i]];
        let mut block_pos = 0usize;
        let mut j = i;
        while j < order.len() && preds.scores[order[j]] == score {
            block_pos += preds.labels[order[j]] as usize;
            j += 1;
        }
        seen += j - i;
        tp += block_pos;
        if block_pos > 0 {
            let precision = T::of_usize(tp) / T::of_usize(seen);
            ap += T::of_usize(block_pos) / total_pos * precision;
        }
        i = j;
    }
    Ok(ap)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ap(scores: &[f64], labels: &[u8]) -> f64 {
        auprc(&RankedPredictions::new(scores.to_vec(), labels.to_vec()).unwrap()).unwrap()
    }

    #[test]
    fn perfect_ranking() {
        assert_eq!(ap(&[0.9, 0.8, 0.2, 0.1], &[1, 1, 0, 0]), 1.0);
    }

    #[test]
    fn worked_example() {
        let v = ap(&[0.9, 0.8, 0.3, 0.2], &[1, 0, 1, 0]);
        assert!((v - 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn constant_scores_give_positive_ratio() {
        let labels = [1, 0, 0, 1, 0, 0, 0];
        assert_eq!(ap(&[0.5; 7], &labels), 2.0 / 7.0);
    }

    #[test]
    fn no_positives_is_an_error() {
        let p = RankedPredictions::new(vec![0.1, 0.2], vec![0, 0]).unwrap();
        assert!(matches!(auprc(&p), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(RankedPredictions::new(vec![0.1], vec![2]).is_err());
        assert!(RankedPredictions::new(vec![0.1, 0.2], vec![1]).is_err());
        assert!(RankedPredictions::new(vec![f64::NAN], vec![1]).is_err());
    }
}
