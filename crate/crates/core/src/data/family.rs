use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::sample::{DomainPool, Sample, SampleId};
use super::shift::ShiftSpec;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Source,
    Target,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub name: String,
    pub n_samples: usize,
    pub positive_ratio: f64,
    /// Exact positive count; overrides `round(n_samples * positive_ratio)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positives: Option<usize>,
    #[serde(default)]
    pub shift: ShiftSpec,
    pub role: Role,
}

impl DomainSpec {
    pub fn positive_count(&self) -> usize {
        self.positives
            .unwrap_or_else(|| (self.n_samples as f64 * self.positive_ratio).round() as usize)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.positive_ratio > 0.0 && self.positive_ratio < 1.0) {
            return Err(Error::invalid(format!(
                "domain {}: positive_ratio {} outside (0, 1)",
                self.name, self.positive_ratio
            )));
        }
        let pos = self.positive_count();
        if pos == 0 {
            return Err(Error::invalid(format!("domain {} would have no positives", self.name)));
        }
        if pos >= self.n_samples {
            return Err(Error::invalid(format!("domain {} would have no negatives", self.name)));
        }
        if !(self.shift.noise_scale >= 0.0) || !self.shift.rotation.is_finite() {
            return Err(Error::invalid(format!("domain {}: bad shift", self.name)));
        }
        Ok(())
    }
}

/// Two-class base distribution, defined on a 2-D latent plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BaseDistribution {
    /// Interleaved half circles.
    Moons,
    /// Isotropic unit Gaussians whose means are `separation` apart.
    Gaussian { separation: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainFamily {
    pub seed: u64,
    pub dim: usize,
    pub base: BaseDistribution,
    /// Standard deviation of the per-coordinate noise.
    pub noise: f64,
    /// Standard deviation of the jitter on the 2-D latent point, before the
    /// lift. This is what makes the classes overlap.
    #[serde(default)]
    pub latent_noise: f64,
    pub domains: Vec<DomainSpec>,
}

impl DomainFamily {
    /// Eleven domains shaped after the skin-lesion groups: one large source
    /// (`H`) and ten targets with graded shift and class imbalance.
    pub fn table_one(dim: usize, seed: u64) -> Self {
        const ROWS: [(&str, usize, usize, f64); 11] = [
            ("H", 4699, 465, 0.10),
            ("HA", 557, 25, 0.04),
            ("HLH", 220, 99, 0.45),
            ("HLP", 218, 15, 0.07),
            ("B", 4639, 1918, 0.41),
            ("BA", 879, 71, 0.08),
            ("BLH", 932, 612, 0.66),
            ("BLP", 297, 192, 0.65),
            ("M", 1847, 565, 0.31),
            ("MA", 464, 37, 0.08),
            ("MLH", 292, 175, 0.60),
        ];
        // (rotation, translation along the first two coordinates, noise scale)
        const SHIFTS: [(f64, f64, f64, f64); 11] = [
            (0.0, 0.0, 0.0, 1.0),
            (0.25, 0.25, 0.0, 1.0),
            (0.375, 0.0, 0.375, 1.1),
            (0.875, 0.625, -0.25, 1.3),
            (0.5, -0.375, 0.25, 1.0),
            (0.625, -0.25, 0.5, 1.1),
            (0.75, -0.5, 0.375, 1.2),
            (1.125, -0.75, 0.625, 1.3),
            (0.75, 0.5, -0.5, 1.1),
            (0.875, 0.625, -0.375, 1.2),
            (1.0, 0.75, -0.625, 1.3),
        ];
        let domains = ROWS
            .iter()
            .zip(SHIFTS)
            .enumerate()
            .map(|(i, (&(name, n, pos, ratio), (rot, tx, ty, ns)))| DomainSpec {
                name: name.to_string(),
                n_samples: n,
                positive_ratio: ratio,
                positives: Some(pos),
                shift: ShiftSpec {
                    rotation: rot,
                    translation: if tx == 0.0 && ty == 0.0 { Vec::new() } else { vec![tx, ty] },
                    noise_scale: ns,
                },
                role: if i == 0 { Role::Source } else { Role::Target },
            })
            .collect();
        Self {
            seed,
            dim,
            base: BaseDistribution::Moons,
            noise: 0.15,
            latent_noise: 0.35,
            domains,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::invalid("family dimensionality must be at least 2"));
        }
        if !(self.noise >= 0.0 && self.latent_noise >= 0.0) {
            return Err(Error::invalid("negative base noise"));
        }
        let sources = self.domains.iter().filter(|d| d.role == Role::Source).count();
        if sources != 1 {
            return Err(Error::invalid(format!("family has {sources} source domains, expected 1")));
        }
        let mut names = std::collections::HashSet::new();
        for d in &self.domains {
            d.validate()?;
            if !names.insert(d.name.as_str()) {
                return Err(Error::invalid(format!("duplicate domain name {}", d.name)));
            }
            if d.shift.translation.len() > self.dim {
                return Err(Error::invalid(format!(
                    "domain {}: translation longer than dim {}",
                    d.name, self.dim
                )));
            }
        }
        Ok(())
    }

    pub fn source(&self) -> Option<&DomainSpec> {
        self.domains.iter().find(|d| d.role == Role::Source)
    }

    pub fn targets(&self) -> impl Iterator<Item = &DomainSpec> {
        self.domains.iter().filter(|d| d.role == Role::Target)
    }
}

/// Fixed lift of the 2-D latent point into the remaining coordinates:
/// `x_k = sin(w_k . z + b_k)`.
struct Lift {
    w: Vec<[f64; 2]>,
    b: Vec<f64>,
}

impl Lift {
    fn new(extra: usize, rng: &mut ChaCha8Rng) -> Self {
        let normal = Normal::new(0.0, 1.5).expect("valid std");
        let w = (0..extra).map(|_| [normal.sample(rng), normal.sample(rng)]).collect();
        let b = (0..extra)
            .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
            .collect();
        Self { w, b }
    }

    fn embed(&self, z: [f64; 2], out: &mut Vec<f64>) {
        out.extend_from_slice(&z);
        out.extend(
            self.w
                .iter()
                .zip(&self.b)
                .map(|(w, b)| (w[0] * z[0] + w[1] * z[1] + b).sin()),
        );
    }
}

fn latent(base: BaseDistribution, label: u8, rng: &mut ChaCha8Rng) -> [f64; 2] {
    match base {
        BaseDistribution::Moons => {
            let t = rng.random_range(0.0..std::f64::consts::PI);
            if label == 0 {
                [t.cos(), t.sin()]
            } else {
                [1.0 - t.cos(), 0.5 - t.sin()]
            }
        }
        BaseDistribution::Gaussian { separation } => {
            let n = Normal::new(0.0, 1.0).expect("unit normal");
            let half = if label == 1 { separation / 2.0 } else { -separation / 2.0 };
            [half + n.sample(rng), n.sample(rng)]
        }
    }
}

/// Generates every domain of the family. Positive counts are exact, sample
/// order is shuffled, ids are consecutive across domains in family order.
pub fn gen_family<T: Scalar>(family: &DomainFamily) -> Result<Vec<DomainPool<T>>> {
    family.validate()?;
    let mut lift_rng = ChaCha8Rng::seed_from_u64(family.seed);
    let lift = Lift::new(family.dim - 2, &mut lift_rng);
    let mut next_id = 0u64;
    let mut pools = Vec::with_capacity(family.domains.len());
    for (index, spec) in family.domains.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(family.seed);
        rng.set_stream(index as u64 + 1);
        let pos = spec.positive_count();
        let mut labels: Vec<u8> = (0..spec.n_samples).map(|i| u8::from(i < pos)).collect();
        labels.shuffle(&mut rng);

        let std = family.noise * spec.shift.noise_scale;
        let noise = Normal::new(0.0, std).map_err(|e| Error::invalid(e.to_string()))?;
        let jitter = Normal::new(0.0, family.latent_noise * spec.shift.noise_scale)
            .map_err(|e| Error::invalid(e.to_string()))?;
        let shift = spec.shift.transform();
        let mut samples = Vec::with_capacity(spec.n_samples);
        let mut x = Vec::with_capacity(family.dim);
        for label in labels {
            x.clear();
            let mut z = latent(family.base, label, &mut rng);
            if family.latent_noise > 0.0 {
                z[0] += jitter.sample(&mut rng);
                z[1] += jitter.sample(&mut rng);
            }
            lift.embed(z, &mut x);
            for v in x.iter_mut() {
                *v += noise.sample(&mut rng);
            }
            shift.apply(&mut x);
            samples.push(Sample {
                id: SampleId(next_id),
                features: x.iter().map(|&v| T::of(v)).collect(),
                label: Some(label),
                domain: spec.name.clone(),
            });
            next_id += 1;
        }
        pools.push(DomainPool::new(spec.name.clone(), samples)?);
    }
    Ok(pools)
}
