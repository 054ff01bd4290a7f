use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::tape::{Gradients, Tape, Var};
use crate::nn::tensor::Tensor;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Softmax,
}

impl Activation {
    fn apply<T: Scalar>(self, t: Tensor<T>) -> Tensor<T> {
        match self {
            Activation::Identity => t,
            Activation::Relu => t.map(|v| if v > T::zero() { v } else { T::zero() }),
            Activation::Tanh => t.map(T::tanh),
            Activation::Softmax => t.softmax_rows(),
        }
    }

    fn record<'t, T: Scalar>(self, v: Var<'t, T>) -> Var<'t, T> {
        match self {
            Activation::Identity => v,
            Activation::Relu => v.relu(),
            Activation::Tanh => v.tanh(),
            Activation::Softmax => v.softmax(),
        }
    }
}

/// Affine map `x W + b` followed by an activation. `weights` is `in x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
    pub activation: Activation,
}

impl<T: Scalar> Layer<T> {
    pub fn new(weights: Tensor<T>, bias: Tensor<T>, activation: Activation) -> Result<Self> {
        if weights.shape().len() != 2 || bias.shape() != [weights.cols()] {
            return Err(Error::shape(format!(
                "layer weights {:?} with bias {:?}",
                weights.shape(),
                bias.shape()
            )));
        }
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    /// He-uniform weights, zero bias.
    pub fn he_uniform<R: Rng + ?Sized>(
        fan_in: usize,
        fan_out: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let bound = (6.0 / fan_in as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| T::of(rng.random_range(-bound..bound)))
            .collect();
        Self {
            weights: Tensor::matrix(fan_in, fan_out, data).expect("sized by construction"),
            bias: Tensor::zeros(&[fan_out]),
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.cols()
    }
}

/// Stack of dense layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    layers: Vec<Layer<T>>,
}

impl<T: Scalar> Network<T> {
    pub fn new(layers: Vec<Layer<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("network needs at least one layer"));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::shape(format!(
                    "layer {i} outputs {} but layer {} takes {}",
                    pair[0].output_dim(),
                    i + 1,
                    pair[1].input_dim()
                )));
            }
        }
        Ok(Self { layers })
    }

    /// Builds a network with `dims.len() - 1` layers; `activations[i]` follows layer `i`.
    pub fn init<R: Rng + ?Sized>(
        dims: &[usize],
        activations: &[Activation],
        rng: &mut R,
    ) -> Result<Self> {
        if dims.len() < 2 || activations.len() != dims.len() - 1 {
            return Err(Error::invalid(format!(
                "{} dims need {} activations, got {}",
                dims.len(),
                dims.len().saturating_sub(1),
                activations.len()
            )));
        }
        if dims.contains(&0) {
            return Err(Error::invalid("layer widths must be positive"));
        }
        let layers = dims
            .windows(2)
            .zip(activations)
            .map(|(w, &act)| Layer::he_uniform(w[0], w[1], act, rng))
            .collect();
        Self::new(layers)
    }

    /// MLP with `hidden` activation between layers and `output` after the last.
    pub fn mlp<R: Rng + ?Sized>(
        dims: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let n = dims.len().saturating_sub(1);
        let acts: Vec<Activation> = (0..n)
            .map(|i| if i + 1 == n { output } else { hidden })
            .collect();
        Self::init(dims, &acts, rng)
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Parameter tensors in a fixed order: weights then bias, per layer.
    pub fn params(&self) -> impl Iterator<Item = &Tensor<T>> {
        self.layers.iter().flat_map(|l| [&l.weights, &l.bias])
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Tensor<T>> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weights, &mut l.bias])
    }

    /// True when both networks have the same layer shapes and activations.
    pub fn same_architecture(&self, other: &Self) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                a.weights.shape() == b.weights.shape() && a.activation == b.activation
            })
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.input_dim() {
            return Err(Error::shape(format!(
                "batch has {cols} features, network expects {}",
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Inference pass; nothing is recorded.
    pub fn forward(&self, batch: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(batch.cols())?;
        let mut x = if batch.shape().len() == 1 {
            Tensor::matrix(1, batch.len(), batch.data().to_vec())?
        } else {
            batch.clone()
        };
        for layer in &self.layers {
            x = layer
                .activation
                .apply(x.matmul(&layer.weights)?.add_row(&layer.bias)?);
        }
        x.ensure_finite("network output")?;
        Ok(x)
    }

    /// Places the parameters on `tape`, as trainable leaves or constants.
    pub fn bind<'t>(&self, tape: &'t Tape<T>, trainable: bool) -> BoundNetwork<'t, T> {
        let leaf = |t: &Tensor<T>| {
            if trainable {
                tape.param(t.clone())
            } else {
                tape.constant(t.clone())
            }
        };
        BoundNetwork {
            layers: self
                .layers
                .iter()
                .map(|l| BoundLayer {
                    weights: leaf(&l.weights),
                    bias: leaf(&l.bias),
                    activation: l.activation,
                    shape: (l.weights.shape().to_vec(), l.bias.shape().to_vec()),
                })
                .collect(),
            input_dim: self.input_dim(),
        }
    }

    /// Byte-level parameter equality.
    pub fn bitwise_eq(&self, other: &Self) -> bool {
        self.same_architecture(other)
            && self.params().zip(other.params()).all(|(a, b)| {
                a.data()
                    .iter()
                    .zip(b.data())
                    .all(|(x, y)| x.as_f64().to_bits() == y.as_f64().to_bits())
            })
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    weights: l.weights.cast(),
                    bias: l.bias.cast(),
                    activation: l.activation,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone)]
struct BoundLayer<'t, T> {
    weights: Var<'t, T>,
    bias: Var<'t, T>,
    activation: Activation,
    shape: (Vec<usize>, Vec<usize>),
}

/// A network whose parameters live on a tape for one forward/backward cycle.
#[derive(Debug, Clone)]
pub struct BoundNetwork<'t, T> {
    layers: Vec<BoundLayer<'t, T>>,
    input_dim: usize,
}

impl<'t, T: Scalar> BoundNetwork<'t, T> {
    /// Recorded forward pass.
    pub fn forward(&self, x: Var<'t, T>) -> Result<Var<'t, T>> {
        let shape = x.shape();
        if shape.last().copied() != Some(self.input_dim) || shape.len() != 2 {
            return Err(Error::shape(format!(
                "recorded forward got {shape:?}, network expects [_, {}]",
                self.input_dim
            )));
        }
        let mut h = x;
        for l in &self.layers {
            h = l.activation.record(h.matmul(l.weights)?.add_row(l.bias)?);
        }
        Ok(h)
    }

    /// Gradients for this network's parameters, layer by layer. Constant
    /// bindings yield zeros.
    pub fn grads(&self, grads: &Gradients<T>) -> NetworkGrads<T> {
        NetworkGrads {
            layers: self
                .layers
                .iter()
                .map(|l| LayerGrads {
                    weights: grads
                        .get(l.weights)
                        .cloned()
                        .unwrap_or_else(|| Tensor::zeros(&l.shape.0)),
                    bias: grads
                        .get(l.bias)
                        .cloned()
                        .unwrap_or_else(|| Tensor::zeros(&l.shape.1)),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads<T> {
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Per-parameter gradients with the same layout as [`Network::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGrads<T> {
    pub layers: Vec<LayerGrads<T>>,
}

impl<T: Scalar> NetworkGrads<T> {
    pub fn iter(&self) -> impl Iterator<Item = &Tensor<T>> {
        self.layers.iter().flat_map(|l| [&l.weights, &l.bias])
    }

    pub fn is_zero(&self) -> bool {
        self.iter().all(|t| t.data().iter().all(|&v| v == T::zero()))
    }

    pub fn flatten(&self) -> Vec<T> {
        self.iter().flat_map(|t| t.data().iter().copied()).collect()
    }
}
