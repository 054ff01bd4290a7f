use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Mean and sample standard deviation over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedAggregate<T> {
    pub values: Vec<T>,
    pub mean: T,
    /// `n - 1` denominator; absent for a single seed.
    pub std: Option<T>,
}

pub fn aggregate<T: Scalar>(values: &[T]) -> Result<SeedAggregate<T>> {
    if values.is_empty() {
        return Err(Error::invalid("aggregate over zero seeds"));
    }
    let n = T::of_usize(values.len());
    let mean = values.iter().copied().sum::<T>() / n;
    let std = (values.len() >= 2).then(|| {
        let ss: T = values.iter().map(|&v| (v - mean) * (v - mean)).sum();
        (ss / (n - T::one())).sqrt()
    });
    Ok(SeedAggregate {
        values: values.to_vec(),
        mean,
        std,
    })
}

impl<T: Scalar> SeedAggregate<T> {
    /// `mean±std` with four decimals, or just the mean for one seed.
    pub fn cell(&self) -> String {
        match self.std {
            Some(s) => format!("{:.4}±{:.4}", self.mean, s),
            None => format!("{:.4}", self.mean),
        }
    }
}

/// Per-seed values of one metric on one domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSeries<T> {
    pub domain: String,
    pub values: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow<T> {
    pub domain: String,
    pub baseline_mean: T,
    pub method_mean: T,
    /// `method_mean - baseline_mean`.
    pub delta: T,
}

/// Per-domain mean difference between a method and the baseline. Both inputs
/// must cover the same domains in the same order with equal seed counts.
pub fn delta_table<T: Scalar>(
    method: &[DomainSeries<T>],
    baseline: &[DomainSeries<T>],
) -> Result<Vec<DeltaRow<T>>> {
    if method.len() != baseline.len() {
        return Err(Error::invalid(format!(
            "grid mismatch: {} method domains vs {} baseline domains",
            method.len(),
            baseline.len()
        )));
    }
    method
        .iter()
        .zip(baseline)
        .map(|(m, b)| {
            if m.domain != b.domain || m.values.len() != b.values.len() {
                return Err(Error::invalid(format!(
                    "grid mismatch at {}/{} ({} vs {} seeds)",
                    m.domain,
                    b.domain,
                    m.values.len(),
                    b.values.len()
                )));
            }
            let mm = aggregate(&m.values)?.mean;
            let bm = aggregate(&b.values)?.mean;
            Ok(DeltaRow {
                domain: m.domain.clone(),
                baseline_mean: bm,
                method_mean: mm,
                delta: mm - bm,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_values_have_zero_std() {
        let a = aggregate(&[0.3, 0.3, 0.3]).unwrap();
        assert_eq!(a.std, Some(0.0));
        assert!((a.mean - 0.3f64).abs() < 1e-15);
    }

    #[test]
    fn two_values() {
        let a = aggregate(&[0.0f64, 1.0]).unwrap();
        assert_eq!(a.mean, 0.5);
        assert!((a.std.unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn five_values_by_hand() {
        // mean = 3.0 / 5 = 0.6; deviations -0.2, -0.1, 0, 0.1, 0.2 -> ss = 0.1; var = 0.025
        let a = aggregate(&[0.4f64, 0.5, 0.6, 0.7, 0.8]).unwrap();
        assert!((a.mean - 0.6).abs() < 1e-15);
        assert!((a.std.unwrap() - 0.025f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn empty_and_single() {
        assert!(aggregate::<f64>(&[]).is_err());
        assert_eq!(aggregate(&[0.7f64]).unwrap().std, None);
    }

    fn series(domain: &str, values: &[f64]) -> DomainSeries<f64> {
        DomainSeries {
            domain: domain.into(),
            values: values.to_vec(),
        }
    }

    #[test]
    fn deltas() {
        let base = vec![series("HA", &[0.77, 0.77])];
        let same = delta_table(&base, &base).unwrap();
        assert_eq!(same[0].delta, 0.0);
        let m = vec![series("HA", &[0.80, 0.80])];
        let d = delta_table(&m, &base).unwrap();
        assert!((d[0].delta - 0.03).abs() < 1e-12);
    }

    #[test]
    fn grid_mismatch() {
        let base = vec![series("HA", &[0.7, 0.8])];
        assert!(delta_table(&[series("HB", &[0.7, 0.8])], &base).is_err());
        assert!(delta_table(&[series("HA", &[0.7])], &base).is_err());
        assert!(delta_table(&[], &base).is_err());
    }
}
