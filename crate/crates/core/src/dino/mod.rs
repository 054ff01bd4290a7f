//! Self-distillation with an EMA teacher: multi-view generation, the centered
//! and sharpened cross-entropy objective, and the two-stage training loop.

mod distill;
mod train;
mod views;

pub use distill::{
    collapse_floor, dino_loss, dino_loss_value, ema_update, is_collapsed, teacher_entropy,
    BackboneSpec, DinoNet, DistillParams, DistillState, ProjectorSpec, PROB_CLAMP,
};
pub use train::{pretrain_ssl, ExportNet, FullStage, HeadStage, SslConfig, SslOutcome};
pub use views::{make_views, ViewConfig, Views};

