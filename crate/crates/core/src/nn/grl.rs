use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::tape::{self, Var};
use crate::nn::tensor::Tensor;
use crate::scalar::Scalar;

/// Gradient reversal gate: the identity on the forward pass, `-lambda` times
/// the upstream gradient on the backward pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrlGate<T> {
    lambda: T,
}

impl<T: Scalar> GrlGate<T> {
    pub fn new(lambda: T) -> Result<Self> {
        if !(lambda >= T::zero()) || !lambda.is_finite() {
            return Err(Error::invalid(format!(
                "gradient reversal lambda must be finite and >= 0, got {lambda}"
            )));
        }
        Ok(Self { lambda })
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }

    pub fn apply<'t>(&self, x: Var<'t, T>) -> Var<'t, T> {
        x.reverse_grad(self.lambda)
    }

    /// The gradient the gate hands to its input given `upstream`.
    pub fn backward(&self, upstream: &Tensor<T>) -> Tensor<T> {
        tape::reverse(upstream, self.lambda)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tape::Tape;

    fn through_gate(lambda: f64, upstream: Vec<f64>) -> (Tensor<f64>, Tensor<f64>) {
        let tape = Tape::new();
        let x = tape.param(Tensor::vector(vec![0.25; upstream.len()]));
        let gate = GrlGate::new(lambda).unwrap();
        let y = gate.apply(x);
        let fwd = y.value();
        let g = tape.constant(Tensor::vector(upstream));
        let grads = tape.backward(y.mul(g).unwrap().sum()).unwrap();
        (fwd, grads.get(x).unwrap().clone())
    }

    #[test]
    fn forward_is_identity() {
        let (fwd, _) = through_gate(0.7, vec![1.0, 2.0]);
        assert_eq!(fwd.data(), &[0.25, 0.25]);
    }

    #[test]
    fn lambda_one_negates() {
        let (_, g) = through_gate(1.0, vec![1.5, -3.0]);
        assert_eq!(g.data(), &[-1.5, 3.0]);
    }

    #[test]
    fn lambda_zero_blocks() {
        let (_, g) = through_gate(0.0, vec![1.5, -3.0]);
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn half_lambda_example() {
        let (_, g) = through_gate(0.5, vec![2.0, -4.0]);
        assert_eq!(g.data(), &[-1.0, 2.0]);
    }

    #[test]
    fn negative_lambda_rejected() {
        assert!(GrlGate::new(-0.1f64).is_err());
        assert!(GrlGate::new(f64::NAN).is_err());
    }
}
