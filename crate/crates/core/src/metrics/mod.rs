//! Imbalance-aware evaluation: average precision, seed aggregation and
//! baseline deltas.

mod aggregate;
mod auprc;
mod grid;

pub use aggregate::{aggregate, delta_table, DeltaRow, DomainSeries, SeedAggregate};
pub use auprc::{auprc, RankedPredictions};
pub use grid::{GridCell, ResultGrid, BASELINE, GRID_SCHEMA_VERSION};

use crate::scalar::Scalar;

/// Fraction of correct argmax predictions. Debug output only.
pub fn accuracy<T: Scalar>(scores: &[T], labels: &[u8], threshold: T) -> Option<T> {
    if scores.is_empty() || scores.len() != labels.len() {
        return None;
    }
    let correct = scores
        .iter()
        .zip(labels)
        .filter(|(&s, &l)| (s >= threshold) == (l == 1))
        .count();
    Some(T::of_usize(correct) / T::of_usize(scores.len()))
}
