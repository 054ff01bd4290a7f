use serde::{Deserialize, Serialize};

use super::model::{DannModel, ProbeModel, SOURCE_DOMAIN, TARGET_DOMAIN};
use crate::error::{Error, Result};
use crate::nn::{BoundNetwork, GrlGate, NetworkGrads, Optimizer, OptimizerKind, Tape, Tensor, Var};
use crate::scalar::Scalar;

/// Losses reported by one adaptation step; `total = l_c + weight * l_d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptLosses<T> {
    /// Class cross-entropy.
    pub l_c: T,
    /// Domain cross-entropy (DANN), target entropy (MME) or zero (fine-tuning).
    pub l_d: T,
    pub total: T,
}

impl<T: Scalar> AdaptLosses<T> {
    pub fn new(l_c: T, l_d: T, weight: T) -> Self {
        Self {
            l_c,
            l_d,
            total: l_c + weight * l_d,
        }
    }
}

/// Labeled rows: a feature matrix and one class per row.
#[derive(Debug, Clone, Copy)]
pub struct Labeled<'a, T> {
    pub x: &'a Tensor<T>,
    pub y: &'a [u8],
}

impl<T: Scalar> Labeled<'_, T> {
    fn check(&self, what: &str) -> Result<()> {
        if self.x.rows() != self.y.len() {
            return Err(Error::shape(format!(
                "{what}: {} rows but {} labels",
                self.x.rows(),
                self.y.len()
            )));
        }
        if let Some(&bad) = self.y.iter().find(|&&l| l > 1) {
            return Err(Error::invalid(format!("{what}: label {bad} is not binary")));
        }
        Ok(())
    }

    fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// One mini-batch for any of the adaptation steps.
#[derive(Debug, Clone, Copy)]
pub struct AdaptBatch<'a, T> {
    pub source: Option<Labeled<'a, T>>,
    pub target: Option<&'a Tensor<T>>,
    pub labeled_target: Option<Labeled<'a, T>>,
    /// Per-row class-loss weight of labeled target rows (source rows weigh 1).
    pub target_weight: T,
}

/// Weight that gives `n_target` labeled target rows the same total mass as
/// `n_source` source rows.
pub fn parity_weight<T: Scalar>(n_source: usize, n_target: usize) -> T {
    if n_source == 0 || n_target == 0 {
        T::one()
    } else {
        T::of_usize(n_source) / T::of_usize(n_target)
    }
}

/// Per-network gradients of one step, before any update.
#[derive(Debug, Clone)]
pub struct StepGrads<T> {
    pub backbone: NetworkGrads<T>,
    pub head: NetworkGrads<T>,
    pub domain_head: Option<NetworkGrads<T>>,
    pub losses: AdaptLosses<T>,
}

#[derive(Debug, Clone)]
pub struct ProbeOptimizers<T> {
    pub backbone: Optimizer<T>,
    pub head: Optimizer<T>,
}

impl<T: Scalar> ProbeOptimizers<T> {
    pub fn new(kind: OptimizerKind, model: &ProbeModel<T>) -> Self {
        Self {
            backbone: Optimizer::new(kind, &model.backbone),
            head: Optimizer::new(kind, &model.head),
        }
    }

    fn apply(&mut self, model: &mut ProbeModel<T>, g: &StepGrads<T>, lr: T) -> Result<()> {
        if !model.frozen {
            self.backbone.step(&mut model.backbone, &g.backbone, lr)?;
        }
        self.head.step(&mut model.head, &g.head, lr)
    }
}

#[derive(Debug, Clone)]
pub struct DannOptimizers<T> {
    pub probe: ProbeOptimizers<T>,
    pub domain_head: Optimizer<T>,
}

impl<T: Scalar> DannOptimizers<T> {
    pub fn new(kind: OptimizerKind, model: &DannModel<T>) -> Self {
        Self {
            probe: ProbeOptimizers::new(kind, &model.probe),
            domain_head: Optimizer::new(kind, &model.domain_head),
        }
    }
}

struct Bound<'t, T> {
    tape: &'t Tape<T>,
    backbone: BoundNetwork<'t, T>,
    head: BoundNetwork<'t, T>,
}

impl<'t, T: Scalar> Bound<'t, T> {
    fn new(tape: &'t Tape<T>, model: &ProbeModel<T>) -> Self {
        Self {
            tape,
            backbone: model.backbone.bind(tape, !model.frozen),
            head: model.head.bind(tape, true),
        }
    }

    fn features(&self, x: &Tensor<T>) -> Result<Var<'t, T>> {
        self.backbone.forward(self.tape.constant(x.clone()))
    }

    /// Weighted class cross-entropy over source and labeled target rows,
    /// plus the features used for it.
    fn class_loss(
        &self,
        batch: &AdaptBatch<'_, T>,
    ) -> Result<Option<(Var<'t, T>, Vec<Var<'t, T>>)>> {
        let mut feats = Vec::new();
        let mut targets = Vec::new();
        let mut weights = Vec::new();
        for (part, w) in [
            (batch.source, T::one()),
            (batch.labeled_target, batch.target_weight),
        ] {
            let Some(part) = part.filter(|p| !p.is_empty()) else {
                continue;
            };
            part.check("class batch")?;
            feats.push(self.features(part.x)?);
            targets.extend(part.y.iter().map(|&l| l as usize));
            weights.extend(std::iter::repeat_n(w, part.y.len()));
        }
        if feats.is_empty() {
            return Ok(None);
        }
        let f = self.tape.vstack(&feats)?;
        let loss = self.head.forward(f)?.cross_entropy(&targets, &weights)?;
        Ok(Some((loss, feats)))
    }
}

fn nonempty<'a, T: Scalar>(x: Option<&'a Tensor<T>>, what: &str) -> Result<&'a Tensor<T>> {
    x.filter(|t| t.rows() > 0)
        .ok_or_else(|| Error::invalid(format!("{what} batch is empty")))
}

/// Gradients of `l_c + domain_weight * l_d` for DANN. The domain head sees
/// source rows against target rows (unlabeled and labeled), each domain
/// carrying half of the loss mass, through the reversal gate with `lambda`.
pub fn dann_grads<T: Scalar>(
    model: &DannModel<T>,
    batch: &AdaptBatch<'_, T>,
    lambda: T,
    domain_weight: T,
) -> Result<StepGrads<T>> {
    let grl = GrlGate::new(lambda)?;
    let source = batch
        .source
        .filter(|s| !s.is_empty())
        .ok_or_else(|| Error::invalid("source batch is empty"))?;
    let target = nonempty(batch.target, "target")?;
    let tape = Tape::new();
    let b = Bound::new(&tape, &model.probe);
    let dh = model.domain_head.bind(&tape, true);

    let (l_c, class_feats) = b.class_loss(batch)?.expect("source present");
    let mut dom_feats = vec![class_feats[0], b.features(target)?];
    let n_s = source.y.len();
    let mut n_t = target.rows();
    if let Some(lt) = batch.labeled_target.filter(|l| !l.is_empty()) {
        dom_feats.push(class_feats[1]);
        n_t += lt.y.len();
    }
    let mut dom_targets = vec![SOURCE_DOMAIN; n_s];
    dom_targets.extend(std::iter::repeat_n(TARGET_DOMAIN, n_t));
    let (ws, wt) = (T::one() / T::of_usize(n_s), T::one() / T::of_usize(n_t));
    let mut dom_weights = vec![ws; n_s];
    dom_weights.extend(std::iter::repeat_n(wt, n_t));

    let f = tape.vstack(&dom_feats)?;
    let l_d = dh.forward(grl.apply(f))?.cross_entropy(&dom_targets, &dom_weights)?;
    let total = l_c.add(l_d.scale(domain_weight))?;
    let losses = AdaptLosses::new(l_c.item(), l_d.item(), domain_weight);
    let grads = tape.backward(total)?;
    Ok(StepGrads {
        backbone: b.backbone.grads(&grads),
        head: b.head.grads(&grads),
        domain_head: Some(dh.grads(&grads)),
        losses,
    })
}

/// Gradients of the minimax-entropy objective. The classifier descends
/// `l_c - lambda_ent * H(target)`; the features receive the entropy gradient
/// through a unit reversal gate and so descend `lambda_ent * H(target)`.
pub fn mme_grads<T: Scalar>(
    model: &ProbeModel<T>,
    batch: &AdaptBatch<'_, T>,
    lambda_ent: T,
) -> Result<StepGrads<T>> {
    if !(lambda_ent >= T::zero()) {
        return Err(Error::invalid(format!("lambda_ent must be >= 0, got {lambda_ent}")));
    }
    let target = nonempty(batch.target, "target")?;
    let tape = Tape::new();
    let b = Bound::new(&tape, model);
    let (l_c, _) = b
        .class_loss(batch)?
        .ok_or_else(|| Error::invalid("no labeled rows in batch"))?;
    let (loss, ent) = if lambda_ent > T::zero() {
        let ft = b.features(target)?.reverse_grad(T::one());
        let h = b.head.forward(ft)?.mean_entropy();
        (l_c.add(h.scale(-lambda_ent))?, h.item())
    } else {
        (l_c, target_entropy(model, target)?)
    };
    let losses = AdaptLosses::new(l_c.item(), ent, lambda_ent);
    let grads = tape.backward(loss)?;
    Ok(StepGrads {
        backbone: b.backbone.grads(&grads),
        head: b.head.grads(&grads),
        domain_head: None,
        losses,
    })
}

/// Gradients of the weighted class cross-entropy on labeled target rows,
/// optionally mixed with source rows.
pub fn finetune_grads<T: Scalar>(model: &ProbeModel<T>, batch: &AdaptBatch<'_, T>) -> Result<StepGrads<T>> {
    if batch.labeled_target.is_none_or(|l| l.is_empty()) {
        return Err(Error::invalid("fine-tuning needs labeled target samples"));
    }
    let tape = Tape::new();
    let b = Bound::new(&tape, model);
    let (l_c, _) = b.class_loss(batch)?.expect("labeled target present");
    let losses = AdaptLosses::new(l_c.item(), T::zero(), T::zero());
    let grads = tape.backward(l_c)?;
    Ok(StepGrads {
        backbone: b.backbone.grads(&grads),
        head: b.head.grads(&grads),
        domain_head: None,
        losses,
    })
}

/// Mean prediction entropy of the probe on `x`.
pub fn target_entropy<T: Scalar>(model: &ProbeModel<T>, x: &Tensor<T>) -> Result<T> {
    let tape = Tape::new();
    let z = tape.constant(model.logits(x)?);
    Ok(z.mean_entropy().item())
}

pub fn dann_step<T: Scalar>(
    model: &mut DannModel<T>,
    opts: &mut DannOptimizers<T>,
    batch: &AdaptBatch<'_, T>,
    lambda: T,
    domain_weight: T,
    lr: T,
) -> Result<AdaptLosses<T>> {
    let g = dann_grads(model, batch, lambda, domain_weight)?;
    opts.probe.apply(&mut model.probe, &g, lr)?;
    let dg = g.domain_head.as_ref().expect("dann produces domain grads");
    opts.domain_head.step(&mut model.domain_head, dg, lr)?;
    Ok(g.losses)
}

pub fn mme_step<T: Scalar>(
    model: &mut ProbeModel<T>,
    opts: &mut ProbeOptimizers<T>,
    batch: &AdaptBatch<'_, T>,
    lambda_ent: T,
    lr: T,
) -> Result<AdaptLosses<T>> {
    let g = mme_grads(model, batch, lambda_ent)?;
    opts.apply(model, &g, lr)?;
    Ok(g.losses)
}

pub fn finetune_step<T: Scalar>(
    model: &mut ProbeModel<T>,
    opts: &mut ProbeOptimizers<T>,
    batch: &AdaptBatch<'_, T>,
    lr: T,
) -> Result<AdaptLosses<T>> {
    let g = finetune_grads(model, batch)?;
    opts.apply(model, &g, lr)?;
    Ok(g.losses)
}

/// One step on the domain head alone: domain cross-entropy, nothing else moves.
pub fn domain_head_step<T: Scalar>(
    model: &mut DannModel<T>,
    opt: &mut Optimizer<T>,
    source: &Tensor<T>,
    target: &Tensor<T>,
    lr: T,
) -> Result<T> {
    if source.rows() == 0 || target.rows() == 0 {
        return Err(Error::invalid("domain head needs both domains"));
    }
    let fs = model.probe.features(source)?;
    let ft = model.probe.features(target)?;
    let tape = Tape::new();
    let dh = model.domain_head.bind(&tape, true);
    let f = tape.constant(Tensor::vstack(&[&fs, &ft])?);
    let (n_s, n_t) = (fs.rows(), ft.rows());
    let mut targets = vec![SOURCE_DOMAIN; n_s];
    targets.extend(std::iter::repeat_n(TARGET_DOMAIN, n_t));
    let mut weights = vec![T::one() / T::of_usize(n_s); n_s];
    weights.extend(std::iter::repeat_n(T::one() / T::of_usize(n_t), n_t));
    let loss = dh.forward(f)?.cross_entropy(&targets, &weights)?;
    let value = loss.item();
    let grads = tape.backward(loss)?;
    opt.step(&mut model.domain_head, &dh.grads(&grads), lr)?;
    Ok(value)
}
