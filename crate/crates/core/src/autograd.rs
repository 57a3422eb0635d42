//! Reverse-mode automatic differentiation over a recorded tape.
//!
//! A [`Graph`] owns (or borrows, for model parameters) the value of every node
//! it records. Leaves flagged `requires_grad` receive accumulated gradients
//! when [`Graph::backward`] runs from a scalar output.

use alloc::borrow::Cow;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::ops::{self, Padding};
use crate::{Error, Result, Tensor};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Conv2d { input: Var, weight: Var, bias: Var, stride: (usize, usize), padding: Padding },
    Dense { input: Var, weight: Var, bias: Var },
    Relu(Var),
    MaxPool { input: Var, argmax: Vec<usize> },
    MeanOverTime(Var),
    L2Normalize(Var),
    SoftmaxXent { logits: Var, target: usize, probs: Vec<f64> },
    Add(Var, Var),
    Sub(Var, Var),
    Dot(Var, Var),
    AddScalar(Var),
    Scale(Var, f64),
    Sum(Var),
    Mean(Vec<Var>),
    Reshape(Var),
}

struct Node<'a> {
    value: Cow<'a, Tensor>,
    op: Op,
    requires_grad: bool,
}

pub struct Graph<'a> {
    nodes: Vec<Node<'a>>,
    grads: Vec<Option<Vec<f64>>>,
}

impl Default for Graph<'_> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a> Graph<'a> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new(), grads: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Cow<'a, Tensor>, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn derived(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.push(Cow::Owned(value), op, requires_grad)
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(Cow::Owned(value), Op::Leaf, requires_grad)
    }

    /// A leaf that borrows its value, used for model parameters.
    pub fn param(&mut self, value: &'a Tensor, requires_grad: bool) -> Var {
        self.push(Cow::Borrowed(value), Op::Leaf, requires_grad)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn conv2d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Var,
        stride: (usize, usize),
        padding: Padding,
    ) -> Result<Var> {
        let y = ops::conv2d(self.value(input), self.value(weight), self.value(bias), stride, padding)?;
        Ok(self.derived(y, Op::Conv2d { input, weight, bias, stride, padding }, &[input, weight, bias]))
    }

    pub fn dense(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let y = ops::dense(self.value(input), self.value(weight), self.value(bias))?;
        Ok(self.derived(y, Op::Dense { input, weight, bias }, &[input, weight, bias]))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let y = ops::relu(self.value(x));
        self.derived(y, Op::Relu(x), &[x])
    }

    pub fn maxpool2d(&mut self, x: Var, size: usize) -> Result<Var> {
        let (y, argmax) = ops::maxpool2d(self.value(x), size)?;
        Ok(self.derived(y, Op::MaxPool { input: x, argmax }, &[x]))
    }

    pub fn mean_over_time(&mut self, x: Var) -> Result<Var> {
        let y = ops::mean_over_time(self.value(x))?;
        Ok(self.derived(y, Op::MeanOverTime(x), &[x]))
    }

    pub fn l2_normalize(&mut self, x: Var) -> Result<Var> {
        let y = ops::l2_normalize(self.value(x))?;
        Ok(self.derived(y, Op::L2Normalize(x), &[x]))
    }

    /// Scalar cross-entropy of `softmax(logits)` against `target`.
    pub fn softmax_xent(&mut self, logits: Var, target: usize) -> Result<Var> {
        let (loss, probs) = ops::softmax_xent(self.value(logits), target)?;
        Ok(self.derived(Tensor::scalar(loss), Op::SoftmaxXent { logits, target, probs }, &[logits]))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::shape(format!(
                "{what}: shapes {:?} and {:?} differ",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(x, y)| x + y).collect();
        let y = Tensor::new(self.value(a).shape(), data)?;
        Ok(self.derived(y, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(x, y)| x - y).collect();
        let y = Tensor::new(self.value(a).shape(), data)?;
        Ok(self.derived(y, Op::Sub(a, b), &[a, b]))
    }

    /// Inner product of two equally sized tensors, as a scalar.
    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).len() != self.value(b).len() {
            return Err(Error::shape("dot: operand lengths differ"));
        }
        let d = ops::dot(self.value(a).data(), self.value(b).data());
        Ok(self.derived(Tensor::scalar(d), Op::Dot(a, b), &[a, b]))
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        let data = self.value(x).data().iter().map(|v| v + c).collect();
        let y = Tensor::new(self.value(x).shape(), data).expect("same shape");
        self.derived(y, Op::AddScalar(x), &[x])
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let data = self.value(x).data().iter().map(|v| v * c).collect();
        let y = Tensor::new(self.value(x).shape(), data).expect("same shape");
        self.derived(y, Op::Scale(x, c), &[x])
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.derived(Tensor::scalar(s), Op::Sum(x), &[x])
    }

    /// Arithmetic mean of scalar nodes.
    pub fn mean(&mut self, xs: &[Var]) -> Result<Var> {
        if xs.is_empty() {
            return Err(Error::contract("mean of no values"));
        }
        let mut total = 0.0;
        for &x in xs {
            total += self.value(x).item()?;
        }
        let y = Tensor::scalar(total / xs.len() as f64);
        Ok(self.derived(y, Op::Mean(xs.to_vec()), xs))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let y = self.value(x).clone().reshape(shape)?;
        Ok(self.derived(y, Op::Reshape(x), &[x]))
    }

    pub fn flatten(&mut self, x: Var) -> Result<Var> {
        let n = self.value(x).len();
        self.reshape(x, &[n])
    }

    /// Reverse-mode accumulation from a scalar `output`. Leaf gradients are
    /// available through [`Graph::grad`] afterwards.
    pub fn backward(&mut self, output: Var) -> Result<()> {
        if !self.value(output).is_scalar() {
            return Err(Error::contract(format!(
                "backward needs a scalar output, got shape {:?}",
                self.value(output).shape()
            )));
        }
        self.grads = vec![None; self.nodes.len()];
        if !self.nodes[output.0].requires_grad {
            return Ok(());
        }
        self.grads[output.0] = Some(vec![1.0]);
        for idx in (0..=output.0).rev() {
            if matches!(self.nodes[idx].op, Op::Leaf) {
                continue;
            }
            let Some(g) = self.grads[idx].take() else { continue };
            self.propagate(idx, &g)?;
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, g: Vec<f64>) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut self.grads[v.0] {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&mut self, idx: usize, g: &[f64]) -> Result<()> {
        let rg = |s: &Self, v: Var| s.nodes[v.0].requires_grad;
        match &self.nodes[idx].op {
            Op::Leaf => {}
            &Op::Conv2d { input, weight, bias, stride, padding } => {
                let need = (rg(self, input), rg(self, weight), rg(self, bias));
                let grads = ops::conv2d_backward(self.value(input), self.value(weight), stride, padding, g, need)?;
                if let Some(d) = grads.input {
                    self.accumulate(input, d);
                }
                if let Some(d) = grads.weight {
                    self.accumulate(weight, d);
                }
                if let Some(d) = grads.bias {
                    self.accumulate(bias, d);
                }
            }
            &Op::Dense { input, weight, bias } => {
                let (dx, dw, db) = ops::dense_backward(self.value(input), self.value(weight), g);
                self.accumulate(input, dx);
                self.accumulate(weight, dw);
                self.accumulate(bias, db);
            }
            &Op::Relu(x) => {
                let dx = ops::relu_backward(self.value(x), g);
                self.accumulate(x, dx);
            }
            Op::MaxPool { input, argmax } => {
                let input = *input;
                let dx = ops::maxpool2d_backward(self.value(input).len(), argmax, g);
                self.accumulate(input, dx);
            }
            &Op::MeanOverTime(x) => {
                let dx = ops::mean_over_time_backward(self.value(x).shape(), g);
                self.accumulate(x, dx);
            }
            &Op::L2Normalize(x) => {
                let dx = ops::l2_normalize_backward(self.value(x), &self.nodes[idx].value, g);
                self.accumulate(x, dx);
            }
            Op::SoftmaxXent { logits, target, probs } => {
                let (logits, dx) = (*logits, ops::softmax_xent_backward(probs, *target, g[0]));
                self.accumulate(logits, dx);
            }
            &Op::Add(a, b) => {
                self.accumulate(a, g.to_vec());
                self.accumulate(b, g.to_vec());
            }
            &Op::Sub(a, b) => {
                self.accumulate(a, g.to_vec());
                self.accumulate(b, g.iter().map(|v| -v).collect());
            }
            &Op::Dot(a, b) => {
                let da = self.value(b).data().iter().map(|v| v * g[0]).collect();
                let db = self.value(a).data().iter().map(|v| v * g[0]).collect();
                self.accumulate(a, da);
                self.accumulate(b, db);
            }
            &Op::AddScalar(x) | &Op::Reshape(x) => self.accumulate(x, g.to_vec()),
            &Op::Scale(x, c) => self.accumulate(x, g.iter().map(|v| v * c).collect()),
            &Op::Sum(x) => {
                let n = self.value(x).len();
                self.accumulate(x, vec![g[0]; n]);
            }
            Op::Mean(xs) => {
                let xs = xs.clone();
                let share = g[0] / xs.len() as f64;
                for x in xs {
                    self.accumulate(x, vec![share]);
                }
            }
        }
        Ok(())
    }

    /// Gradient accumulated for a leaf by the last [`Graph::backward`] call.
    /// `None` when the leaf does not require gradients or was unreachable.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Vec<f64>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}
