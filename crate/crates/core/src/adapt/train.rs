use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::model::{DannModel, ProbeModel};
use super::steps::{
    dann_step, domain_head_step, finetune_step, mme_step, parity_weight, AdaptBatch, AdaptLosses,
    DannOptimizers, Labeled,
};
use crate::error::{Error, Result};
use crate::nn::{Network, Optimizer, OptimizerKind, Tape, Tensor};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    /// Stop once the epoch loss has not improved by `tol` for `patience` epochs.
    pub tol: f64,
    pub patience: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            max_epochs: 100,
            batch_size: 128,
            lr: 0.05,
            optimizer: OptimizerKind::default(),
            tol: 1e-4,
            patience: 5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProbeOutcome<T> {
    pub model: ProbeModel<T>,
    pub epoch_losses: Vec<T>,
}

/// Trains a zero-initialised linear head on frozen backbone features.
pub fn linear_probe<T: Scalar, R: Rng + ?Sized>(
    backbone: Network<T>,
    x: &Tensor<T>,
    y: &[u8],
    cfg: &ProbeConfig,
    rng: &mut R,
) -> Result<ProbeOutcome<T>> {
    if x.rows() != y.len() {
        return Err(Error::shape(format!("{} rows but {} labels", x.rows(), y.len())));
    }
    if !y.contains(&0) || !y.contains(&1) {
        return Err(Error::Data("linear probe needs both classes in the source pool".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }
    let mut model = ProbeModel::new(backbone);
    let feats = model.features(x)?;
    let mut opt = Optimizer::new(cfg.optimizer, &model.head);
    let lr = T::of(cfg.lr);
    let mut order: Vec<usize> = (0..y.len()).collect();
    let mut epoch_losses = Vec::new();
    let mut best = T::infinity();
    let mut stale = 0;
    for _ in 0..cfg.max_epochs {
        order.shuffle(rng);
        let mut total = T::zero();
        for chunk in order.chunks(cfg.batch_size) {
            let tape = Tape::new();
            let head = model.head.bind(&tape, true);
            let targets: Vec<usize> = chunk.iter().map(|&i| y[i] as usize).collect();
            let ones = vec![T::one(); chunk.len()];
            let loss = head
                .forward(tape.constant(feats.select_rows(chunk)))?
                .cross_entropy(&targets, &ones)?;
            total += loss.item() * T::of_usize(chunk.len());
            let grads = tape.backward(loss)?;
            opt.step(&mut model.head, &head.grads(&grads), lr)?;
        }
        let mean = total / T::of_usize(y.len());
        epoch_losses.push(mean);
        if best - mean > T::of(cfg.tol) {
            best = mean;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    Ok(ProbeOutcome {
        model,
        epoch_losses,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdaptMethod {
    Finetune,
    Dann,
    Mme,
}

impl AdaptMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            AdaptMethod::Finetune => "finetune",
            AdaptMethod::Dann => "dann",
            AdaptMethod::Mme => "mme",
        }
    }
}

impl std::fmt::Display for AdaptMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for AdaptMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [AdaptMethod::Finetune, AdaptMethod::Dann, AdaptMethod::Mme]
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown adaptation method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptConfig {
    pub steps: usize,
    pub batch_size: usize,
    /// Constant learning rate.
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub domain_weight: f64,
    /// Ramp the reversal strength from 0 towards 1 as `2 / (1 + exp(-10 p)) - 1`.
    pub grl_warmup: bool,
    pub lambda_ent: f64,
    pub train_backbone: bool,
    /// Mix source rows into fine-tuning batches.
    pub mix_source: bool,
    /// Weight labeled target rows up to the source batch's mass.
    pub target_parity: bool,
    pub domain_hidden: Vec<usize>,
    /// Steps used to fit the domain head when no DANN training provides one.
    pub domain_head_steps: usize,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            steps: 200,
            batch_size: 64,
            lr: 1e-3,
            optimizer: OptimizerKind::default(),
            domain_weight: 1.0,
            grl_warmup: true,
            lambda_ent: 0.1,
            train_backbone: false,
            mix_source: true,
            target_parity: true,
            domain_hidden: vec![32],
            domain_head_steps: 200,
        }
    }
}

/// Reversal strength at `step` of `total`.
pub fn grl_lambda(step: usize, total: usize, warmup: bool) -> f64 {
    if !warmup {
        return 1.0;
    }
    let p = step as f64 / total.max(1) as f64;
    2.0 / (1.0 + (-10.0 * p).exp()) - 1.0
}

/// Everything an adaptation run reads.
#[derive(Debug, Clone, Copy)]
pub struct AdaptData<'a, T> {
    pub source_x: &'a Tensor<T>,
    pub source_y: &'a [u8],
    /// Unlabeled target rows.
    pub target_x: &'a Tensor<T>,
    pub labeled_x: &'a Tensor<T>,
    pub labeled_y: &'a [u8],
}

fn draw<T: Scalar, R: Rng + ?Sized>(x: &Tensor<T>, n: usize, rng: &mut R) -> (Vec<usize>, Tensor<T>) {
    let idx: Vec<usize> = (0..n.min(x.rows()))
        .map(|_| rng.random_range(0..x.rows()))
        .collect();
    let t = x.select_rows(&idx);
    (idx, t)
}

/// Runs `cfg.steps` steps of `method`. Fine-tuning without labeled target
/// rows takes no step.
pub fn adapt<T: Scalar, R: Rng + ?Sized>(
    model: &mut DannModel<T>,
    method: AdaptMethod,
    data: &AdaptData<'_, T>,
    cfg: &AdaptConfig,
    rng: &mut R,
) -> Result<Vec<AdaptLosses<T>>> {
    if data.labeled_x.rows() != data.labeled_y.len() || data.source_x.rows() != data.source_y.len() {
        return Err(Error::shape("adaptation data rows and labels disagree"));
    }
    let has_labels = !data.labeled_y.is_empty();
    if method == AdaptMethod::Finetune && !has_labels {
        return Ok(Vec::new());
    }
    model.probe.frozen = !cfg.train_backbone;
    let mut opts = DannOptimizers::new(cfg.optimizer, model);
    let lr = T::of(cfg.lr);
    let labeled = Labeled {
        x: data.labeled_x,
        y: data.labeled_y,
    };
    let mut history = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let use_source = method != AdaptMethod::Finetune || cfg.mix_source;
        let (src_idx, src_x) = if use_source {
            draw(data.source_x, cfg.batch_size, rng)
        } else {
            (Vec::new(), Tensor::zeros(&[0, data.source_x.cols()]))
        };
        let src_y: Vec<u8> = src_idx.iter().map(|&i| data.source_y[i]).collect();
        let (_, tgt_x) = draw(data.target_x, cfg.batch_size, rng);
        let target_weight = if cfg.target_parity && use_source {
            parity_weight(src_y.len(), data.labeled_y.len())
        } else {
            T::one()
        };
        let batch = AdaptBatch {
            source: use_source.then_some(Labeled { x: &src_x, y: &src_y }),
            target: (tgt_x.rows() > 0).then_some(&tgt_x),
            labeled_target: has_labels.then_some(labeled),
            target_weight,
        };
        let losses = match method {
            AdaptMethod::Finetune => finetune_step(&mut model.probe, &mut opts.probe, &batch, lr)?,
            AdaptMethod::Dann => {
                let lambda = T::of(grl_lambda(step, cfg.steps, cfg.grl_warmup));
                dann_step(model, &mut opts, &batch, lambda, T::of(cfg.domain_weight), lr)?
            }
            AdaptMethod::Mme => {
                mme_step(&mut model.probe, &mut opts.probe, &batch, T::of(cfg.lambda_ent), lr)?
            }
        };
        if !losses.total.is_finite() {
            return Err(Error::Diverged(format!("{method} adaptation at step {step}")));
        }
        history.push(losses);
    }
    Ok(history)
}

/// Trains only the domain head to tell source rows from target rows.
pub fn fit_domain_head<T: Scalar, R: Rng + ?Sized>(
    model: &mut DannModel<T>,
    source_x: &Tensor<T>,
    target_x: &Tensor<T>,
    cfg: &AdaptConfig,
    rng: &mut R,
) -> Result<Vec<T>> {
    let mut opt = Optimizer::new(cfg.optimizer, &model.domain_head);
    let lr = T::of(cfg.lr);
    (0..cfg.domain_head_steps)
        .map(|_| {
            let (_, s) = draw(source_x, cfg.batch_size, rng);
            let (_, t) = draw(target_x, cfg.batch_size, rng);
            domain_head_step(model, &mut opt, &s, &t, lr)
        })
        .collect()
}
