//! Versioned JSON checkpoints.
//!
//! ```json
//! {
//!   "format": "ssada-checkpoint",
//!   "version": 1,
//!   "kind": "probe",
//!   "networks": {
//!     "backbone": { "layers": [ { "activation": "relu", "inputs": 2, "outputs": 3,
//!                                 "weights": [...], "bias": [...] } ] }
//!   },
//!   "center": null
//! }
//! ```
//!
//! Weights are row-major `inputs x outputs`. Values are stored as f64, so f32
//! and f64 networks both round-trip exactly.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Activation, Layer, Network, Tensor};
use crate::scalar::Scalar;

pub const FORMAT: &str = "ssada-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub activation: Activation,
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkRecord {
    pub layers: Vec<LayerRecord>,
}

impl NetworkRecord {
    pub fn from_network<T: Scalar>(net: &Network<T>) -> Self {
        Self {
            layers: net
                .layers()
                .iter()
                .map(|l| LayerRecord {
                    activation: l.activation,
                    inputs: l.input_dim(),
                    outputs: l.output_dim(),
                    weights: l.weights.data().iter().map(|v| v.as_f64()).collect(),
                    bias: l.bias.data().iter().map(|v| v.as_f64()).collect(),
                })
                .collect(),
        }
    }

    pub fn to_network<T: Scalar>(&self) -> Result<Network<T>> {
        let layers = self
            .layers
            .iter()
            .map(|l| {
                let w = Tensor::matrix(l.inputs, l.outputs, l.weights.iter().map(|&v| T::of(v)).collect())
                    .map_err(|e| Error::Checkpoint(e.to_string()))?;
                let b = Tensor::new(vec![l.outputs], l.bias.iter().map(|&v| T::of(v)).collect())
                    .map_err(|e| Error::Checkpoint(e.to_string()))?;
                Layer::new(w, b, l.activation).map_err(|e| Error::Checkpoint(e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        Network::new(layers).map_err(|e| Error::Checkpoint(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub kind: String,
    pub networks: BTreeMap<String, NetworkRecord>,
    pub center: Option<Vec<f64>>,
}

impl Checkpoint {
    pub fn new(kind: impl Into<String>) -> Self {
        Self {
            format: FORMAT.into(),
            version: VERSION,
            kind: kind.into(),
            networks: BTreeMap::new(),
            center: None,
        }
    }

    pub fn with_network<T: Scalar>(mut self, name: &str, net: &Network<T>) -> Self {
        self.networks.insert(name.into(), NetworkRecord::from_network(net));
        self
    }

    pub fn network<T: Scalar>(&self, name: &str) -> Result<Network<T>> {
        self.networks
            .get(name)
            .ok_or_else(|| Error::Checkpoint(format!("no network named {name:?}")))?
            .to_network()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Self = serde_json::from_str(text)
            .map_err(|e| Error::Checkpoint(format!("unreadable checkpoint: {e}")))?;
        if ck.format != FORMAT {
            return Err(Error::Checkpoint(format!("unknown format {:?}", ck.format)));
        }
        if ck.version != VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {} (expected {VERSION})",
                ck.version
            )));
        }
        Ok(ck)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
