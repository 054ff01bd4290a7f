use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::distill::{dino_loss_value, is_collapsed, teacher_entropy, DinoNet, DistillParams, DistillState};
use super::views::{make_views, ViewConfig};
use crate::error::{Error, Result};
use crate::nn::{Network, OneCycleSchedule, Optimizer, OptimizerKind, Tape, Tensor, Var};
use crate::scalar::Scalar;

/// Stage 1: backbone frozen, projection head trained at a constant rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeadStage {
    pub epochs: usize,
    pub lr: f64,
}

impl Default for HeadStage {
    fn default() -> Self {
        Self {
            epochs: 30,
            lr: 1e-3,
        }
    }
}

/// Stage 2: every layer trained, one-cycle schedule with per-group peak rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FullStage {
    pub epochs: usize,
    pub backbone_lr: f64,
    pub projector_lr: f64,
    pub warmup_fraction: f64,
    pub final_lr_fraction: f64,
}

impl Default for FullStage {
    fn default() -> Self {
        Self {
            epochs: 25,
            backbone_lr: 1e-4,
            projector_lr: 5e-4,
            warmup_fraction: 0.3,
            final_lr_fraction: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportNet {
    Teacher,
    Student,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SslConfig {
    pub views: ViewConfig,
    pub distill: DistillParams,
    pub batch_size: usize,
    /// Samples drawn per epoch; `None` walks the whole pool.
    pub samples_per_epoch: Option<usize>,
    pub head_stage: HeadStage,
    pub full_stage: FullStage,
    pub optimizer: OptimizerKind,
    /// Rows used to track teacher entropy and the evaluation loss.
    pub probe_size: usize,
    pub export: ExportNet,
}

impl Default for SslConfig {
    fn default() -> Self {
        Self {
            views: ViewConfig::default(),
            distill: DistillParams::default(),
            batch_size: 64,
            samples_per_epoch: None,
            head_stage: HeadStage::default(),
            full_stage: FullStage::default(),
            optimizer: OptimizerKind::adam(),
            probe_size: 256,
            export: ExportNet::Teacher,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SslOutcome<T> {
    /// Backbone with the projector discarded.
    pub backbone: Network<T>,
    pub state: DistillState<T>,
    /// Loss on fixed probe views: entry 0 before training, then one per epoch.
    pub eval_losses: Vec<T>,
    /// Index into `eval_losses` where stage 2 starts.
    pub stage2_start: usize,
    /// Mean training loss per epoch.
    pub epoch_losses: Vec<T>,
    /// Entropy of the batch-mean teacher distribution, aligned with `eval_losses`.
    pub teacher_entropy: Vec<T>,
    pub collapsed: bool,
}


struct Probe<T> {
    clean: Tensor<T>,
    global: Vec<Tensor<T>>,
    all: Vec<Tensor<T>>,
}

fn view_batches<T: Scalar, R: Rng + ?Sized>(
    rows: &[&[T]],
    cfg: &ViewConfig,
    rng: &mut R,
) -> Result<(Vec<Tensor<T>>, Vec<Tensor<T>>)> {
    let mut per_view: Vec<Vec<&[T]>> = vec![Vec::with_capacity(rows.len()); cfg.n_views()];
    let views: Vec<_> = rows
        .iter()
        .map(|r| make_views(r, cfg, rng))
        .collect::<Result<_>>()?;
    for v in &views {
        for (slot, view) in per_view.iter_mut().zip(v.all()) {
            slot.push(view);
        }
    }
    let all: Vec<Tensor<T>> = per_view
        .iter()
        .map(|vs| Tensor::from_rows(vs))
        .collect::<Result<_>>()?;
    let global = all[..cfg.n_global].to_vec();
    Ok((global, all))
}

fn eval_loss<T: Scalar>(state: &DistillState<T>, probe: &Probe<T>) -> Result<T> {
    let teacher: Vec<Tensor<T>> = probe
        .global
        .iter()
        .map(|g| state.teacher.forward(g))
        .collect::<Result<_>>()?;
    let student: Vec<Tensor<T>> = probe
        .all
        .iter()
        .map(|v| state.student.forward(v))
        .collect::<Result<_>>()?;
    dino_loss_value(&state.center, &state.params, &teacher, &student)
}

/// One distillation step on a batch of rows. Returns the loss.
#[allow(clippy::too_many_arguments)]
fn distill_step<T: Scalar, R: Rng + ?Sized>(
    state: &mut DistillState<T>,
    rows: &[&[T]],
    cfg: &SslConfig,
    train_backbone: bool,
    opt_backbone: &mut Optimizer<T>,
    opt_projector: &mut Optimizer<T>,
    (lr_backbone, lr_projector): (f64, f64),
    rng: &mut R,
) -> Result<T> {
    let (global, all) = view_batches(rows, &cfg.views, rng)?;
    let teacher_logits: Vec<Tensor<T>> = global
        .iter()
        .map(|g| state.teacher.forward(g))
        .collect::<Result<_>>()?;

    let tape = Tape::new();
    let bb = state.student.backbone.bind(&tape, train_backbone);
    let proj = state.student.projector.bind(&tape, true);
    let student: Vec<Var<'_, T>> = all
        .into_iter()
        .map(|v| proj.forward(bb.forward(tape.constant(v))?))
        .collect::<Result<_>>()?;
    let loss = state.loss(&teacher_logits, &student)?;
    let value = loss.item();
    if !value.is_finite() {
        return Err(Error::Diverged(format!("distillation loss is {value}")));
    }
    let grads = tape.backward(loss)?;
    opt_projector.step(&mut state.student.projector, &proj.grads(&grads), T::of(lr_projector))?;
    if train_backbone {
        opt_backbone.step(&mut state.student.backbone, &bb.grads(&grads), T::of(lr_backbone))?;
    }
    state.ema_update()?;
    let refs: Vec<&Tensor<T>> = teacher_logits.iter().collect();
    state.update_center(&Tensor::vstack(&refs)?)?;
    Ok(value)
}

/// Two-stage self-distillation on an unlabeled pool (`data` rows are samples).
///
/// Stage 1 trains only the projection head with the backbone frozen; stage 2
/// trains every layer with per-group one-cycle rates. The exported backbone
/// comes from the teacher or the student per `cfg.export`.
pub fn pretrain_ssl<T: Scalar, R: Rng + ?Sized>(
    data: &Tensor<T>,
    net: DinoNet<T>,
    cfg: &SslConfig,
    rng: &mut R,
) -> Result<SslOutcome<T>> {
    cfg.views.validate()?;
    if data.rows() == 0 || data.is_empty() {
        return Err(Error::invalid("self-distillation needs a non-empty pool"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::invalid("batch_size must be positive"));
    }
    if data.cols() != net.backbone.input_dim() {
        return Err(Error::shape(format!(
            "pool has {} features, backbone expects {}",
            data.cols(),
            net.backbone.input_dim()
        )));
    }
    let n = data.rows();
    let mut state = DistillState::new(net, cfg.distill)?;
    let k = state.student.output_dim();

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let probe_idx: Vec<usize> = order[..cfg.probe_size.clamp(1, n)].to_vec();
    let clean = data.select_rows(&probe_idx);
    let probe_rows: Vec<&[T]> = clean.row_iter().collect();
    let mut probe_rng = ChaCha8Rng::seed_from_u64(rng.random());
    let (global, all) = view_batches(&probe_rows, &cfg.views, &mut probe_rng)?;
    let probe = Probe { clean: clean.clone(), global, all };

    let mut eval_losses = vec![eval_loss(&state, &probe)?];
    let mut entropies = vec![teacher_entropy(&state, &probe.clean)?];
    let mut epoch_losses = Vec::new();

    let per_epoch = cfg.samples_per_epoch.unwrap_or(n).clamp(1, n);
    let steps_per_epoch = per_epoch.div_ceil(cfg.batch_size);
    let mut opt_bb = Optimizer::new(cfg.optimizer, &state.student.backbone);
    let mut opt_proj = Optimizer::new(cfg.optimizer, &state.student.projector);

    let full_steps = cfg.full_stage.epochs * steps_per_epoch;
    let schedule = |peak: f64| -> Result<Option<OneCycleSchedule>> {
        if full_steps == 0 {
            return Ok(None);
        }
        OneCycleSchedule::new(
            peak,
            full_steps,
            cfg.full_stage.warmup_fraction,
            cfg.full_stage.final_lr_fraction,
        )
        .map(Some)
    };
    let sched_bb = schedule(cfg.full_stage.backbone_lr)?;
    let sched_proj = schedule(cfg.full_stage.projector_lr)?;

    let total_epochs = cfg.head_stage.epochs + cfg.full_stage.epochs;
    let mut stage2_start = eval_losses.len() - 1;
    let mut full_step = 0usize;
    for epoch in 0..total_epochs {
        let stage2 = epoch >= cfg.head_stage.epochs;
        if stage2 && epoch == cfg.head_stage.epochs {
            stage2_start = eval_losses.len() - 1;
            opt_proj = Optimizer::new(cfg.optimizer, &state.student.projector);
        }
        order.shuffle(rng);
        let mut sum = T::zero();
        let mut count = 0usize;
        for chunk in order[..per_epoch].chunks(cfg.batch_size) {
            let rows: Vec<&[T]> = chunk.iter().map(|&i| data.row(i)).collect();
            let lrs = match (&sched_bb, &sched_proj) {
                (Some(b), Some(p)) if stage2 => (b.lr(full_step)?, p.lr(full_step)?),
                _ => (0.0, cfg.head_stage.lr),
            };
            let loss = distill_step(
                &mut state,
                &rows,
                cfg,
                stage2,
                &mut opt_bb,
                &mut opt_proj,
                lrs,
                rng,
            )
            .map_err(|e| match e {
                Error::Diverged(msg) | Error::NonFinite(msg) => Error::Diverged(format!(
                    "stage {} epoch {epoch} step {count}: {msg}",
                    if stage2 { 2 } else { 1 }
                )),
                other => other,
            })?;
            if stage2 {
                full_step += 1;
            }
            sum += loss;
            count += 1;
        }
        epoch_losses.push(sum / T::of_usize(count.max(1)));
        eval_losses.push(eval_loss(&state, &probe)?);
        entropies.push(teacher_entropy(&state, &probe.clean)?);
    }

    let collapsed = is_collapsed(&entropies, k);
    let backbone = match cfg.export {
        ExportNet::Teacher => state.teacher.backbone.clone(),
        ExportNet::Student => state.student.backbone.clone(),
    };
    Ok(SslOutcome {
        backbone,
        state,
        eval_losses,
        stage2_start,
        epoch_losses,
        teacher_entropy: entropies,
        collapsed,
    })
}
