//! Dense-network substrate: tensors, reverse-mode tape, layers, gradient
//! reversal, optimizers and learning-rate schedules.

mod grl;
mod network;
mod optim;
mod schedule;
mod tape;
mod tensor;

pub use grl::GrlGate;
pub use network::{Activation, BoundNetwork, Layer, LayerGrads, Network, NetworkGrads};
pub use optim::{sgd_step, Optimizer, OptimizerKind};
pub use schedule::OneCycleSchedule;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

