//! Tape-based reverse-mode differentiation.
//!
//! Operations append nodes to a [`Tape`] in execution order, so the tape is a
//! topologically sorted DAG by construction. [`Tape::backward`] walks it in
//! reverse, accumulating adjoints.

use crate::error::{Error, Result};
use crate::kernels::{self, PoolKind};
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf { requires_grad: bool },
    Conv2d { input: Var, kernel: Var, stride: usize, padding: usize },
    Relu(Var),
    Dense { input: Var, weight: Var, bias: Var },
    Softmax(Var),
    MaxPool { input: Var, argmax: Vec<usize> },
    GlobalAvgPool(Var),
    ScaleShift { input: Var, scale: Var, shift: Var },
    CrossEntropy { logits: Var, labels: Vec<usize> },
    Add(Var, Var),
    Mul(Var, Var),
    Sum(Var),
    SumColumn { input: Var, column: usize },
    Reshape(Var),
}

impl Op {
    fn inputs(&self) -> Vec<Var> {
        match *self {
            Op::Leaf { .. } => vec![],
            Op::Conv2d { input, kernel, .. } => vec![input, kernel],
            Op::Relu(x) | Op::Softmax(x) | Op::GlobalAvgPool(x) | Op::Sum(x) | Op::Reshape(x) => {
                vec![x]
            }
            Op::MaxPool { input, .. } => vec![input],
            Op::Dense { input, weight, bias } => vec![input, weight, bias],
            Op::ScaleShift { input, scale, shift } => vec![input, scale, shift],
            Op::CrossEntropy { logits, .. } => vec![logits],
            Op::Add(a, b) | Op::Mul(a, b) => vec![a, b],
            Op::SumColumn { input, .. } => vec![input],
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Recording of one forward computation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let needs_grad = match op {
            Op::Leaf { requires_grad } => requires_grad,
            ref other => other.inputs().iter().any(|i| self.nodes[i.0].needs_grad),
        };
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Adds an input or parameter. Only leaves with `requires_grad` receive gradients.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf { requires_grad })
    }

    pub fn conv2d(&mut self, input: Var, kernel: Var, stride: usize, padding: usize) -> Result<Var> {
        let y = kernels::conv2d(self.value(input), self.value(kernel), stride, padding)?;
        Ok(self.push(y, Op::Conv2d { input, kernel, stride, padding }))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let y = kernels::relu(self.value(x));
        self.push(y, Op::Relu(x))
    }

    pub fn dense(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let y = kernels::dense(self.value(input), self.value(weight), self.value(bias))?;
        Ok(self.push(y, Op::Dense { input, weight, bias }))
    }

    pub fn softmax(&mut self, logits: Var) -> Result<Var> {
        let y = kernels::softmax(self.value(logits))?;
        Ok(self.push(y, Op::Softmax(logits)))
    }

    pub fn max_pool(&mut self, input: Var, window: usize, stride: usize) -> Result<Var> {
        let (y, argmax) = kernels::pool(self.value(input), PoolKind::Max, window, stride)?;
        Ok(self.push(y, Op::MaxPool { input, argmax }))
    }

    pub fn global_avg_pool(&mut self, input: Var) -> Result<Var> {
        let (y, _) = kernels::pool(self.value(input), PoolKind::GlobalAvg, 0, 0)?;
        Ok(self.push(y, Op::GlobalAvgPool(input)))
    }

    pub fn scale_shift(&mut self, input: Var, scale: Var, shift: Var) -> Result<Var> {
        let y = kernels::scale_shift(self.value(input), self.value(scale), self.value(shift))?;
        Ok(self.push(y, Op::ScaleShift { input, scale, shift }))
    }

    /// Scalar mean cross-entropy of `[B,K]` logits against integer labels.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let loss = kernels::cross_entropy(self.value(logits), labels)?;
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
            },
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = self.zip_with(a, b, "add", |x, y| x + y)?;
        Ok(self.push(y, Op::Add(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = self.zip_with(a, b, "mul", |x, y| x * y)?;
        Ok(self.push(y, Op::Mul(a, b)))
    }

    fn zip_with(&self, a: Var, b: Var, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::shape(
                op,
                format!("{:?} vs {:?}", ta.shape(), tb.shape()),
            ));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Ok(Tensor::from_parts(ta.shape().to_vec(), data))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    /// `Σ_b x[b, column]` for a `[B,K]` tensor.
    pub fn sum_column(&mut self, input: Var, column: usize) -> Result<Var> {
        let t = self.value(input);
        let &[_, k] = t.shape() else {
            return Err(Error::shape("sum_column", format!("expected rank 2, got {:?}", t.shape())));
        };
        if column >= k {
            return Err(Error::invalid(format!("column {column} outside [0, {k})")));
        }
        let s = t.data().chunks_exact(k).map(|row| row[column]).sum();
        Ok(self.push(Tensor::scalar(s), Op::SumColumn { input, column }))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let y = self.value(x).reshape(shape)?;
        Ok(self.push(y, Op::Reshape(x)))
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        let out = self.value(output);
        if out.numel() != 1 {
            return Err(Error::invalid(format!(
                "backward needs a scalar output, got shape {:?}",
                out.shape()
            )));
        }
        let mut adj: Vec<Option<Tensor>> = vec![None; output.0 + 1];
        adj[output.0] = Some(Tensor::from_parts(out.shape().to_vec(), vec![1.0]));

        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad || matches!(node.op, Op::Leaf { .. }) {
                continue;
            }
            let Some(g) = adj[idx].take() else { continue };
            for (var, grad) in self.node_adjoints(node, &g)? {
                accumulate(&mut adj[var.0], grad);
            }
        }

        let grads = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| match n.op {
                Op::Leaf { requires_grad: true } => Some(
                    adj.get_mut(i)
                        .and_then(Option::take)
                        .unwrap_or_else(|| Tensor::zeros_like(&n.value)),
                ),
                _ => None,
            })
            .collect();
        Ok(Gradients { grads })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Vector-Jacobian products of one node, only for inputs that need them.
    fn node_adjoints(&self, node: &Node, g: &Tensor) -> Result<Vec<(Var, Tensor)>> {
        let mut out = Vec::with_capacity(3);
        match node.op {
            Op::Leaf { .. } => {}
            Op::Conv2d { input, kernel, stride, padding } => {
                let (dx, dk) = kernels::conv2d_backward(
                    self.value(input),
                    self.value(kernel),
                    stride,
                    padding,
                    g,
                    self.wants(input),
                    self.wants(kernel),
                )?;
                out.extend(dx.map(|d| (input, d)));
                out.extend(dk.map(|d| (kernel, d)));
            }
            Op::Relu(x) => out.push((x, kernels::relu_backward(self.value(x), g))),
            Op::Dense { input, weight, bias } => {
                let (dx, dw, db) = kernels::dense_backward(self.value(input), self.value(weight), g);
                out.extend([(input, dx), (weight, dw), (bias, db)]);
            }
            Op::Softmax(x) => out.push((x, kernels::softmax_backward(&node.value, g))),
            Op::MaxPool { input, ref argmax } => {
                out.push((input, kernels::max_pool_backward(self.value(input), argmax, g)));
            }
            Op::GlobalAvgPool(x) => {
                out.push((x, kernels::global_avg_pool_backward(self.value(x), g)));
            }
            Op::ScaleShift { input, scale, shift } => {
                let (dx, ds, db) = kernels::scale_shift_backward(self.value(input), self.value(scale), g);
                out.extend([(input, dx), (scale, ds), (shift, db)]);
            }
            Op::CrossEntropy { logits, ref labels } => {
                let d = kernels::cross_entropy_backward(self.value(logits), labels, g.data()[0])?;
                out.push((logits, d));
            }
            Op::Add(a, b) => {
                out.push((a, g.clone()));
                out.push((b, g.clone()));
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(a), self.value(b));
                let da = tb.data().iter().zip(g.data()).map(|(x, y)| x * y).collect();
                let db = ta.data().iter().zip(g.data()).map(|(x, y)| x * y).collect();
                out.push((a, Tensor::from_parts(ta.shape().to_vec(), da)));
                out.push((b, Tensor::from_parts(tb.shape().to_vec(), db)));
            }
            Op::Sum(x) => {
                let t = self.value(x);
                out.push((x, Tensor::from_parts(t.shape().to_vec(), vec![g.data()[0]; t.numel()])));
            }
            Op::SumColumn { input, column } => {
                let t = self.value(input);
                let k = t.shape()[1];
                let mut d = vec![0.0; t.numel()];
                for row in d.chunks_exact_mut(k) {
                    row[column] = g.data()[0];
                }
                out.push((input, Tensor::from_parts(t.shape().to_vec(), d)));
            }
            Op::Reshape(x) => {
                out.push((x, Tensor::from_parts(self.value(x).shape().to_vec(), g.data().to_vec())));
            }
        }
        out.retain(|(v, _)| self.wants(*v));
        Ok(out)
    }
}

fn accumulate(slot: &mut Option<Tensor>, grad: Tensor) {
    match slot {
        Some(acc) => {
            for (a, g) in acc.data_mut().iter_mut().zip(grad.data()) {
                *a += g;
            }
        }
        None => *slot = Some(grad),
    }
}

/// Gradients of one scalar w.r.t. every leaf that requested them.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// `None` when the leaf did not request a gradient.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}
