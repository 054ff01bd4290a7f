//! Self-supervised pretraining and active domain adaptation for binary
//! classification under domain shift, on a small dense-network substrate.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the f64 instantiation used by the command-line harness.

pub mod adapt;
pub mod checkpoint;
pub mod data;
pub mod dino;
pub mod error;
pub mod labeler;
pub mod metrics;
pub mod nn;
pub mod sampler;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor64 = nn::Tensor<f64>;
pub type Network64 = nn::Network<f64>;
pub type DomainPool64 = data::DomainPool<f64>;
pub type ProbeModel64 = adapt::ProbeModel<f64>;
pub type DannModel64 = adapt::DannModel<f64>;
pub type DinoNet64 = dino::DinoNet<f64>;
pub type AcquisitionInput64 = sampler::AcquisitionInput<f64>;
