use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Multi-view augmentation policy for feature vectors.
///
/// A view keeps one contiguous window of coordinates whose length is a random
/// fraction (the "scale") of the input dimension and zeroes the rest. Retained
/// coordinates get Gaussian noise. Local views additionally drop each retained
/// coordinate with probability `mask_fraction`. Only global views reach the
/// teacher.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ViewConfig {
    pub n_global: usize,
    pub n_local: usize,
    pub global_scale: (f64, f64),
    pub local_scale: (f64, f64),
    pub noise_std: f64,
    pub mask_fraction: f64,
}

impl Default for ViewConfig {
    fn default() -> Self {
        Self {
            n_global: 2,
            n_local: 4,
            global_scale: (0.4, 1.0),
            local_scale: (0.05, 0.4),
            noise_std: 0.1,
            mask_fraction: 0.1,
        }
    }
}

impl ViewConfig {
    /// Every view is an exact copy of the input.
    pub fn identity() -> Self {
        Self {
            global_scale: (1.0, 1.0),
            local_scale: (1.0, 1.0),
            noise_std: 0.0,
            mask_fraction: 0.0,
            ..Self::default()
        }
    }

    pub fn n_views(&self) -> usize {
        self.n_global + self.n_local
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_global < 2 {
            return Err(Error::invalid("at least two global views are required"));
        }
        for (name, (lo, hi)) in [("global", self.global_scale), ("local", self.local_scale)] {
            if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
                return Err(Error::invalid(format!(
                    "{name} scale range ({lo}, {hi}) must satisfy 0 < lo <= hi <= 1"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.mask_fraction) {
            return Err(Error::invalid("mask_fraction must be in [0, 1]"));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::invalid("noise_std must be finite and >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Views<T> {
    pub global: Vec<Vec<T>>,
    pub local: Vec<Vec<T>>,
}

impl<T> Views<T> {
    /// Global views first, then local views.
    pub fn all(&self) -> impl Iterator<Item = &Vec<T>> {
        self.global.iter().chain(&self.local)
    }
}

fn draw_view<T: Scalar, R: Rng + ?Sized>(
    x: &[T],
    (lo, hi): (f64, f64),
    noise: Option<&Normal<f64>>,
    mask_fraction: f64,
    rng: &mut R,
) -> Vec<T> {
    let dim = x.len();
    if dim == 0 {
        return Vec::new();
    }
    let scale = if lo < hi { rng.random_range(lo..=hi) } else { lo };
    let len = ((scale * dim as f64).ceil() as usize).clamp(1, dim);
    let start = rng.random_range(0..=dim - len);
    let mut out = vec![T::zero(); dim];
    for i in start..start + len {
        let mut v = x[i];
        if let Some(n) = noise {
            v += T::of(n.sample(rng));
        }
        if mask_fraction > 0.0 && rng.random::<f64>() < mask_fraction {
            v = T::zero();
        }
        out[i] = v;
    }
    out
}

/// Generates `n_global` global and `n_local` local views of `x`.
pub fn make_views<T: Scalar, R: Rng + ?Sized>(
    x: &[T],
    cfg: &ViewConfig,
    rng: &mut R,
) -> Result<Views<T>> {
    cfg.validate()?;
    let noise = if cfg.noise_std > 0.0 {
        Some(Normal::new(0.0, cfg.noise_std).map_err(|e| Error::invalid(e.to_string()))?)
    } else {
        None
    };
    let global = (0..cfg.n_global)
        .map(|_| draw_view(x, cfg.global_scale, noise.as_ref(), 0.0, rng))
        .collect();
    let local = (0..cfg.n_local)
        .map(|_| draw_view(x, cfg.local_scale, noise.as_ref(), cfg.mask_fraction, rng))
        .collect();
    Ok(Views { global, local })
}
