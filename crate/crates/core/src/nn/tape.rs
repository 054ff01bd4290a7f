//! Reverse-mode differentiation over matrix-valued nodes.
//!
//! A [`Tape`] records every operation applied to [`Var`]s during a forward
//! pass. [`Tape::backward`] walks the record once, in reverse, and returns the
//! gradient of a scalar loss with respect to every parameter leaf. The tape is
//! single-use: a second `backward` fails until a new tape is recorded.

use std::cell::RefCell;
use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::nn::tensor::{log_softmax, Tensor};
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
enum Op<T> {
    Constant,
    Param,
    MatMul(usize, usize),
    AddRow(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, T),
    Relu(usize),
    Tanh(usize),
    Softmax(usize),
    Reverse(usize, T),
    Sum(usize),
    Mean(usize),
    VStack(Vec<usize>),
    CrossEntropy {
        logits: usize,
        targets: Vec<usize>,
        weights: Vec<T>,
        probs: Tensor<T>,
    },
    SoftCrossEntropy {
        logits: usize,
        targets: Tensor<T>,
        inv_temp: T,
        probs: Tensor<T>,
        clamp: T,
    },
    MeanEntropy {
        logits: usize,
        probs: Tensor<T>,
    },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

#[derive(Debug, Default)]
struct Inner<T> {
    nodes: Vec<Node<T>>,
    consumed: bool,
}

/// Recording of one forward computation.
#[derive(Debug)]
pub struct Tape<T> {
    inner: RefCell<Inner<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy)]
pub struct Var<'t, T> {
    tape: &'t Tape<T>,
    id: usize,
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            inner: RefCell::new(Inner {
                nodes: Vec::new(),
                consumed: false,
            }),
        }
    }

    fn push(&self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var<'_, T> {
        let mut inner = self.inner.borrow_mut();
        inner.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            tape: self,
            id: inner.nodes.len() - 1,
        }
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push(value, Op::Constant, false)
    }

    /// A trainable leaf.
    pub fn param(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push(value, Op::Param, true)
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of trainable leaves recorded so far.
    pub fn param_count(&self) -> usize {
        self.inner
            .borrow()
            .nodes
            .iter()
            .filter(|n| matches!(n.op, Op::Param))
            .count()
    }

    fn requires(&self, ids: &[usize]) -> bool {
        let inner = self.inner.borrow();
        ids.iter().any(|&i| inner.nodes[i].requires_grad)
    }

    fn with_value<R>(&self, id: usize, f: impl FnOnce(&Tensor<T>) -> R) -> R {
        f(&self.inner.borrow().nodes[id].value)
    }

    /// Row-wise vertical concatenation.
    pub fn vstack<'t>(&'t self, parts: &[Var<'t, T>]) -> Result<Var<'t, T>> {
        let ids: Vec<usize> = parts.iter().map(|v| v.id).collect();
        let value = {
            let inner = self.inner.borrow();
            let refs: Vec<&Tensor<T>> = ids.iter().map(|&i| &inner.nodes[i].value).collect();
            Tensor::vstack(&refs)?
        };
        let rg = self.requires(&ids);
        Ok(self.push(value, Op::VStack(ids), rg))
    }

    /// Gradient of the scalar `loss` with respect to every parameter leaf.
    pub fn backward(&self, loss: Var<'_, T>) -> Result<Gradients<T>> {
        let mut inner = self.inner.borrow_mut();
        if inner.consumed {
            return Err(Error::TapeConsumed);
        }
        if inner.nodes[loss.id].value.len() != 1 {
            return Err(Error::shape(format!(
                "backward needs a scalar loss, got shape {:?}",
                inner.nodes[loss.id].value.shape()
            )));
        }
        inner.consumed = true;
        let nodes = &inner.nodes;
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; nodes.len()];
        grads[loss.id] = Some(Tensor::full(nodes[loss.id].value.shape(), T::one()));

        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else {
                continue;
            };
            if matches!(node.op, Op::Param) {
                grads[id] = Some(g);
                continue;
            }
            for (input, ig) in local_grads(nodes, node, &g)? {
                if !nodes[input].requires_grad {
                    continue;
                }
                match &mut grads[input] {
                    Some(acc) => acc.add_assign(&ig)?,
                    slot @ None => *slot = Some(ig),
                }
            }
        }

        let mut out = HashMap::new();
        for (id, node) in nodes.iter().enumerate() {
            if matches!(node.op, Op::Param) {
                let g = grads[id]
                    .take()
                    .unwrap_or_else(|| Tensor::zeros(node.value.shape()));
                out.insert(id, g);
            }
        }
        Ok(Gradients { by_node: out })
    }
}

fn local_grads<T: Scalar>(
    nodes: &[Node<T>],
    node: &Node<T>,
    g: &Tensor<T>,
) -> Result<Vec<(usize, Tensor<T>)>> {
    let val = |i: usize| &nodes[i].value;
    let needs = |i: usize| nodes[i].requires_grad;
    Ok(match &node.op {
        Op::Constant | Op::Param => Vec::new(),
        Op::MatMul(a, b) => {
            let mut v = Vec::with_capacity(2);
            if needs(*a) {
                v.push((*a, g.matmul_t(val(*b))?));
            }
            if needs(*b) {
                v.push((*b, val(*a).t_matmul(g)?));
            }
            v
        }
        Op::AddRow(a, b) => vec![(*a, g.clone()), (*b, g.sum_rows())],
        Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
        Op::Sub(a, b) => vec![(*a, g.clone()), (*b, g.map(|v| -v))],
        Op::Mul(a, b) => vec![(*a, g.hadamard(val(*b))?), (*b, g.hadamard(val(*a))?)],
        Op::Scale(a, s) => {
            let s = *s;
            vec![(*a, g.map(|v| v * s))]
        }
        Op::Relu(a) => vec![(
            *a,
            g.zip_map(val(*a), |gv, x| if x > T::zero() { gv } else { T::zero() })?,
        )],
        Op::Tanh(a) => vec![(
            *a,
            g.zip_map(&node.value, |gv, y| gv * (T::one() - y * y))?,
        )],
        Op::Softmax(a) => {
            let p = &node.value;
            let m = p.cols();
            let mut out = g.hadamard(p)?;
            for (row, prow) in out.data_mut().chunks_mut(m).zip(p.row_iter()) {
                let dot: T = row.iter().copied().sum();
                for (o, &pv) in row.iter_mut().zip(prow) {
                    *o -= pv * dot;
                }
            }
            vec![(*a, out)]
        }
        Op::Reverse(a, lambda) => vec![(*a, reverse(g, *lambda))],
        Op::Sum(a) => {
            let gv = g.data()[0];
            vec![(*a, Tensor::full(val(*a).shape(), gv))]
        }
        Op::Mean(a) => {
            let n = T::of_usize(val(*a).len());
            let gv = g.data()[0] / n;
            vec![(*a, Tensor::full(val(*a).shape(), gv))]
        }
        Op::VStack(ids) => {
            let m = g.cols();
            let mut offset = 0;
            let mut v = Vec::with_capacity(ids.len());
            for &i in ids {
                let r = val(i).rows();
                let data = g.data()[offset * m..(offset + r) * m].to_vec();
                v.push((i, Tensor::matrix(r, m, data)?));
                offset += r;
            }
            v
        }
        Op::CrossEntropy {
            logits,
            targets,
            weights,
            probs,
        } => {
            let gv = g.data()[0];
            let total: T = weights.iter().copied().sum();
            let mut out = probs.clone();
            for (i, row) in out.data_mut().chunks_mut(probs.cols()).enumerate() {
                row[targets[i]] -= T::one();
                let w = gv * weights[i] / total;
                for v in row.iter_mut() {
                    *v *= w;
                }
            }
            vec![(*logits, out)]
        }
        Op::SoftCrossEntropy {
            logits,
            targets,
            inv_temp,
            probs,
            clamp,
        } => {
            let gv = g.data()[0];
            let n = T::of_usize(probs.rows());
            let k = probs.cols();
            let mut out = Tensor::zeros(probs.shape());
            for (i, orow) in out.data_mut().chunks_mut(k).enumerate() {
                let p = probs.row(i);
                let q = targets.row(i);
                let mass: T = p
                    .iter()
                    .zip(q)
                    .filter(|(&pv, _)| pv > *clamp)
                    .map(|(_, &qv)| qv)
                    .sum();
                for j in 0..k {
                    let active = if p[j] > *clamp { q[j] } else { T::zero() };
                    orow[j] = gv * *inv_temp * (p[j] * mass - active) / n;
                }
            }
            vec![(*logits, out)]
        }
        Op::MeanEntropy { logits, probs } => {
            let gv = g.data()[0];
            let n = T::of_usize(probs.rows());
            let k = probs.cols();
            let mut out = Tensor::zeros(probs.shape());
            for (i, orow) in out.data_mut().chunks_mut(k).enumerate() {
                let logp = log_softmax(val(*logits).row(i));
                let p = probs.row(i);
                let h = -p.iter().zip(&logp).map(|(&a, &b)| a * b).sum::<T>();
                for j in 0..k {
                    orow[j] = -gv * p[j] * (logp[j] + h) / n;
                }
            }
            vec![(*logits, out)]
        }
    })
}

/// Gradient reversal: scales an upstream gradient by `-lambda`.
pub(crate) fn reverse<T: Scalar>(g: &Tensor<T>, lambda: T) -> Tensor<T> {
    g.map(|v| -(lambda * v))
}

impl<'t, T: Scalar> Var<'t, T> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape<T> {
        self.tape
    }

    pub fn value(&self) -> Tensor<T> {
        self.tape.with_value(self.id, Clone::clone)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.with_value(self.id, |v| v.shape().to_vec())
    }

    /// Scalar value of a one-element node.
    pub fn item(&self) -> T {
        self.tape.with_value(self.id, |v| v.data()[0])
    }

    fn unary(self, value: Tensor<T>, op: Op<T>) -> Var<'t, T> {
        let rg = self.tape.requires(&[self.id]);
        self.tape.push(value, op, rg)
    }

    fn binary(self, other: Var<'t, T>, value: Tensor<T>, op: Op<T>) -> Var<'t, T> {
        let rg = self.tape.requires(&[self.id, other.id]);
        self.tape.push(value, op, rg)
    }

    fn eval2(
        self,
        other: Var<'t, T>,
        f: impl FnOnce(&Tensor<T>, &Tensor<T>) -> Result<Tensor<T>>,
    ) -> Result<Tensor<T>> {
        let inner = self.tape.inner.borrow();
        f(&inner.nodes[self.id].value, &inner.nodes[other.id].value)
    }

    pub fn matmul(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        let v = self.eval2(other, |a, b| a.matmul(b))?;
        Ok(self.binary(other, v, Op::MatMul(self.id, other.id)))
    }

    pub fn add_row(self, bias: Var<'t, T>) -> Result<Var<'t, T>> {
        let v = self.eval2(bias, |a, b| a.add_row(b))?;
        Ok(self.binary(bias, v, Op::AddRow(self.id, bias.id)))
    }

    pub fn add(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        let v = self.eval2(other, |a, b| a.add(b))?;
        Ok(self.binary(other, v, Op::Add(self.id, other.id)))
    }

    pub fn sub(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        let v = self.eval2(other, |a, b| a.sub(b))?;
        Ok(self.binary(other, v, Op::Sub(self.id, other.id)))
    }

    pub fn mul(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        let v = self.eval2(other, |a, b| a.hadamard(b))?;
        Ok(self.binary(other, v, Op::Mul(self.id, other.id)))
    }

    pub fn scale(self, s: T) -> Var<'t, T> {
        let v = self.tape.with_value(self.id, |a| a.scale(s));
        self.unary(v, Op::Scale(self.id, s))
    }

    pub fn relu(self) -> Var<'t, T> {
        let v = self
            .tape
            .with_value(self.id, |a| a.map(|x| if x > T::zero() { x } else { T::zero() }));
        self.unary(v, Op::Relu(self.id))
    }

    pub fn tanh(self) -> Var<'t, T> {
        let v = self.tape.with_value(self.id, |a| a.map(T::tanh));
        self.unary(v, Op::Tanh(self.id))
    }

    /// Row-wise softmax.
    pub fn softmax(self) -> Var<'t, T> {
        let v = self.tape.with_value(self.id, Tensor::softmax_rows);
        self.unary(v, Op::Softmax(self.id))
    }

    /// Identity forward; the backward pass multiplies the gradient by `-lambda`.
    pub fn reverse_grad(self, lambda: T) -> Var<'t, T> {
        let v = self.value();
        self.unary(v, Op::Reverse(self.id, lambda))
    }

    pub fn sum(self) -> Var<'t, T> {
        let s = self.tape.with_value(self.id, Tensor::sum);
        self.unary(Tensor::vector(vec![s]), Op::Sum(self.id))
    }

    pub fn mean(self) -> Var<'t, T> {
        let s = self
            .tape
            .with_value(self.id, |a| a.sum() / T::of_usize(a.len().max(1)));
        self.unary(Tensor::vector(vec![s]), Op::Mean(self.id))
    }

    /// Weighted mean cross-entropy of row-wise logits against class indices:
    /// `sum_i w_i * (-log softmax(z_i)[y_i]) / sum_i w_i`.
    pub fn cross_entropy(self, targets: &[usize], weights: &[T]) -> Result<Var<'t, T>> {
        let (value, probs) = self.tape.with_value(self.id, |z| -> Result<_> {
            if z.rows() != targets.len() || weights.len() != targets.len() {
                return Err(Error::shape(format!(
                    "cross_entropy: {} rows, {} targets, {} weights",
                    z.rows(),
                    targets.len(),
                    weights.len()
                )));
            }
            if targets.is_empty() {
                return Err(Error::invalid("cross_entropy over an empty batch"));
            }
            let total: T = weights.iter().copied().sum();
            if total <= T::zero() {
                return Err(Error::invalid("cross_entropy weights sum to zero"));
            }
            let mut loss = T::zero();
            for (i, row) in z.row_iter().enumerate() {
                let t = targets[i];
                if t >= row.len() {
                    return Err(Error::invalid(format!("target {t} out of range")));
                }
                loss -= weights[i] * log_softmax(row)[t];
            }
            Ok((loss / total, z.softmax_rows()))
        })?;
        Ok(self.unary(
            Tensor::vector(vec![value]),
            Op::CrossEntropy {
                logits: self.id,
                targets: targets.to_vec(),
                weights: weights.to_vec(),
                probs,
            },
        ))
    }

    /// Mean over rows of `-sum_k q_k log(max(p_k, clamp))`, with
    /// `p = softmax(z / temperature)` and `q` a constant target distribution.
    pub fn soft_cross_entropy(
        self,
        targets: &Tensor<T>,
        temperature: T,
        clamp: T,
    ) -> Result<Var<'t, T>> {
        if !(temperature > T::zero()) {
            return Err(Error::NonFinite("soft cross-entropy temperature must be > 0".into()));
        }
        let inv_temp = T::one() / temperature;
        let (value, probs) = self.tape.with_value(self.id, |z| -> Result<_> {
            if z.shape() != targets.shape() {
                return Err(Error::shape(format!(
                    "soft_cross_entropy: logits {:?} vs targets {:?}",
                    z.shape(),
                    targets.shape()
                )));
            }
            let p = z.scale(inv_temp).softmax_rows();
            let mut loss = T::zero();
            for (prow, qrow) in p.row_iter().zip(targets.row_iter()) {
                for (&pv, &qv) in prow.iter().zip(qrow) {
                    loss -= qv * pv.max(clamp).ln();
                }
            }
            Ok((loss / T::of_usize(z.rows()), p))
        })?;
        if !value.is_finite() {
            return Err(Error::NonFinite("soft cross-entropy".into()));
        }
        Ok(self.unary(
            Tensor::vector(vec![value]),
            Op::SoftCrossEntropy {
                logits: self.id,
                targets: targets.clone(),
                inv_temp,
                probs,
                clamp,
            },
        ))
    }

    /// Mean over rows of the Shannon entropy of `softmax(z)`.
    pub fn mean_entropy(self) -> Var<'t, T> {
        let (value, probs) = self.tape.with_value(self.id, |z| {
            let mut total = T::zero();
            for row in z.row_iter() {
                let logp = log_softmax(row);
                total -= logp.iter().map(|&l| l.exp() * l).sum::<T>();
            }
            (total / T::of_usize(z.rows().max(1)), z.softmax_rows())
        });
        self.unary(
            Tensor::vector(vec![value]),
            Op::MeanEntropy {
                logits: self.id,
                probs,
            },
        )
    }
}

/// Parameter gradients produced by [`Tape::backward`], keyed by leaf.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    by_node: HashMap<usize, Tensor<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, var: Var<'_, T>) -> Option<&Tensor<T>> {
        self.by_node.get(&var.id)
    }

    /// Number of parameter leaves that received a gradient entry.
    pub fn len(&self) -> usize {
        self.by_node.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_node.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn second_backward_fails() {
        let tape = Tape::<f64>::new();
        let x = tape.param(Tensor::vector(vec![1.0, 2.0]));
        let loss = x.sum();
        assert!(tape.backward(loss).is_ok());
        assert!(matches!(tape.backward(loss), Err(Error::TapeConsumed)));
    }

    #[test]
    fn zero_scaled_loss_gives_zero_gradients() {
        let tape = Tape::<f64>::new();
        let x = tape.param(Tensor::vector(vec![1.0, -2.0, 3.0]));
        let loss = x.tanh().sum().scale(0.0);
        let g = tape.backward(loss).unwrap();
        assert!(g.get(x).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unreached_param_gets_zero_gradient() {
        let tape = Tape::<f64>::new();
        let x = tape.param(Tensor::vector(vec![1.0]));
        let y = tape.param(Tensor::vector(vec![4.0, 5.0]));
        let g = tape.backward(x.sum()).unwrap();
        assert_eq!(g.get(y).unwrap().data(), &[0.0, 0.0]);
    }

    #[test]
    fn uniform_cross_entropy_is_ln2() {
        let tape = Tape::<f64>::new();
        let z = tape.constant(Tensor::zeros(&[4, 2]));
        let ce = z.cross_entropy(&[0, 1, 1, 0], &[1.0; 4]).unwrap();
        assert!((ce.item() - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn reverse_scales_by_negative_lambda() {
        let tape = Tape::<f64>::new();
        let x = tape.param(Tensor::vector(vec![3.0, 1.0]));
        let g = tape.constant(Tensor::vector(vec![2.0, -4.0]));
        let loss = x.reverse_grad(0.5).mul(g).unwrap().sum();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[-1.0, 2.0]);
    }
}
