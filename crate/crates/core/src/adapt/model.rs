use rand::Rng;

use crate::error::Result;
use crate::nn::{Activation, GrlGate, Layer, Network, Tensor};
use crate::scalar::Scalar;

/// Column of the domain logits that stands for the source domain.
pub const SOURCE_DOMAIN: usize = 1;
/// Column of the domain logits that stands for the target domain.
pub const TARGET_DOMAIN: usize = 0;

/// Backbone plus a single affine layer to two class logits.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeModel<T> {
    pub backbone: Network<T>,
    pub head: Network<T>,
    /// When set, training never touches the backbone.
    pub frozen: bool,
}

impl<T: Scalar> ProbeModel<T> {
    /// Zero-initialised head on a frozen backbone.
    pub fn new(backbone: Network<T>) -> Self {
        let d = backbone.output_dim();
        let layer = Layer::new(Tensor::zeros(&[d, 2]), Tensor::zeros(&[2]), Activation::Identity)
            .expect("shapes agree");
        Self {
            backbone,
            head: Network::new(vec![layer]).expect("single layer"),
            frozen: true,
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.backbone.output_dim()
    }

    pub fn features(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.backbone.forward(x)
    }

    pub fn logits(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.head.forward(&self.features(x)?)
    }

    pub fn probs(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.logits(x)?.softmax_rows())
    }

    /// Probability of the positive class, per row.
    pub fn scores(&self, x: &Tensor<T>) -> Result<Vec<T>> {
        Ok(self.probs(x)?.row_iter().map(|r| r[1]).collect())
    }
}

/// Probe plus a domain classifier fed through a gradient reversal gate.
#[derive(Debug, Clone, PartialEq)]
pub struct DannModel<T> {
    pub probe: ProbeModel<T>,
    /// Features to two domain logits.
    pub domain_head: Network<T>,
    pub grl: GrlGate<T>,
}

impl<T: Scalar> DannModel<T> {
    pub fn new<R: Rng + ?Sized>(probe: ProbeModel<T>, hidden: &[usize], rng: &mut R) -> Result<Self> {
        let mut dims = vec![probe.feature_dim()];
        dims.extend_from_slice(hidden);
        dims.push(2);
        let domain_head = Network::mlp(&dims, Activation::Relu, Activation::Identity, rng)?;
        Ok(Self {
            probe,
            domain_head,
            grl: GrlGate::new(T::one())?,
        })
    }

    /// Probability that each row comes from the source domain.
    pub fn domain_probs(&self, x: &Tensor<T>) -> Result<Vec<T>> {
        let f = self.probe.features(x)?;
        Ok(self
            .domain_head
            .forward(&f)?
            .softmax_rows()
            .row_iter()
            .map(|r| r[SOURCE_DOMAIN])
            .collect())
    }
}
