//! Source linear probing and the adaptation procedures run inside active
//! rounds: fine-tuning, DANN and minimax entropy.

mod model;
mod steps;
mod train;

pub use model::{DannModel, ProbeModel, SOURCE_DOMAIN, TARGET_DOMAIN};
pub use steps::{
    dann_grads, dann_step, domain_head_step, finetune_grads, finetune_step, mme_grads, mme_step,
    parity_weight, target_entropy, AdaptBatch, AdaptLosses, DannOptimizers, Labeled,
    ProbeOptimizers, StepGrads,
};
pub use train::{
    adapt, fit_domain_head, grl_lambda, linear_probe, AdaptConfig, AdaptData, AdaptMethod,
    ProbeConfig, ProbeOutcome,
};
