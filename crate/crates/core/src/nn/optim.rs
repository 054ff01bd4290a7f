use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::network::{Network, NetworkGrads};
use crate::nn::tensor::Tensor;
use crate::scalar::Scalar;

/// One SGD step with heavy-ball momentum: `v <- momentum * v + g; p <- p - lr * v`.
/// With `momentum = 0` this is plain gradient descent.
pub fn sgd_step<T: Scalar>(
    params: &mut [T],
    grads: &[T],
    velocity: &mut [T],
    lr: T,
    momentum: T,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != velocity.len() {
        return Err(Error::shape(format!(
            "sgd_step: {} params, {} grads, {} velocity slots",
            params.len(),
            grads.len(),
            velocity.len()
        )));
    }
    if !(lr > T::zero()) {
        return Err(Error::invalid(format!("learning rate must be > 0, got {lr}")));
    }
    for ((p, &g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        *v = momentum * *v + g;
        *p -= lr * *v;
    }
    Ok(())
}

/// One Adam step with bias correction; `step` is 1-based.
#[allow(clippy::too_many_arguments)]
fn adam_step<T: Scalar>(
    params: &mut [T],
    grads: &[T],
    m: &mut [T],
    v: &mut [T],
    lr: T,
    (beta1, beta2, eps): (T, T, T),
    step: i32,
) {
    let c1 = T::one() - beta1.powi(step);
    let c2 = T::one() - beta2.powi(step);
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = beta1 * m[i] + (T::one() - beta1) * g;
        v[i] = beta2 * v[i] + (T::one() - beta2) * g * g;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd { momentum: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Sgd { momentum: 0.9 }
    }
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Optimizer state for one network.
#[derive(Debug, Clone)]
pub struct Optimizer<T> {
    kind: OptimizerKind,
    first: Vec<Tensor<T>>,
    second: Vec<Tensor<T>>,
    steps: i32,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(kind: OptimizerKind, net: &Network<T>) -> Self {
        let zeros: Vec<Tensor<T>> = net.params().map(|p| Tensor::zeros(p.shape())).collect();
        let second = match kind {
            OptimizerKind::Adam { .. } => zeros.clone(),
            OptimizerKind::Sgd { .. } => Vec::new(),
        };
        Self {
            kind,
            first: zeros,
            second,
            steps: 0,
        }
    }

    pub fn steps(&self) -> i32 {
        self.steps
    }

    pub fn step(&mut self, net: &mut Network<T>, grads: &NetworkGrads<T>, lr: T) -> Result<()> {
        let n_params = net.params().count();
        if grads.iter().count() != n_params || self.first.len() != n_params {
            return Err(Error::shape("optimizer/network/gradient layout mismatch"));
        }
        self.steps += 1;
        for (i, (p, g)) in net.params_mut().zip(grads.iter()).enumerate() {
            if p.shape() != g.shape() {
                return Err(Error::shape(format!(
                    "param {:?} vs grad {:?}",
                    p.shape(),
                    g.shape()
                )));
            }
            match self.kind {
                OptimizerKind::Sgd { momentum } => {
                    sgd_step(
                        p.data_mut(),
                        g.data(),
                        self.first[i].data_mut(),
                        lr,
                        T::of(momentum),
                    )?;
                }
                OptimizerKind::Adam { beta1, beta2, eps } => {
                    let (m, v) = (&mut self.first[i], &mut self.second[i]);
                    adam_step(
                        p.data_mut(),
                        g.data(),
                        m.data_mut(),
                        v.data_mut(),
                        lr,
                        (T::of(beta1), T::of(beta2), T::of(eps)),
                        self.steps,
                    );
                }
            }
        }
        for p in net.params() {
            p.ensure_finite("parameters after optimizer step")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vanilla_sgd_example() {
        let mut p = [1.0];
        let mut v = [0.0];
        sgd_step(&mut p, &[2.0], &mut v, 0.1, 0.0).unwrap();
        assert!((p[0] - 0.8f64).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_leaves_param() {
        let mut p = [0.42];
        let mut v = [0.0];
        sgd_step(&mut p, &[0.0], &mut v, 0.5, 0.9).unwrap();
        assert_eq!(p[0], 0.42);
    }

    #[test]
    fn momentum_recurrence() {
        // v1 = 1, p1 = -0.1; v2 = 0.9 + 1 = 1.9, p2 = -0.1 - 0.19 = -0.29
        let mut p = [0.0f64];
        let mut v = [0.0];
        sgd_step(&mut p, &[1.0], &mut v, 0.1, 0.9).unwrap();
        assert!((p[0] + 0.1).abs() < 1e-15);
        sgd_step(&mut p, &[1.0], &mut v, 0.1, 0.9).unwrap();
        assert!((p[0] + 0.29).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut p = [0.0f64; 2];
        let mut v = [0.0; 2];
        assert!(sgd_step(&mut p, &[1.0], &mut v, 0.1, 0.0).is_err());
        assert!(sgd_step(&mut p, &[1.0, 1.0], &mut v, 0.0, 0.0).is_err());
    }
}
