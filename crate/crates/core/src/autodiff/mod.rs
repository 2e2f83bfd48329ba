//! A small reverse-mode tape over dense `f64` tensors.
//!
//! Every op appends a node holding its value. Nodes whose inputs need no
//! gradient carry no backward closure, so a graph built from constants only
//! is a plain forward evaluation.

mod check;
mod conv;
mod linalg;
mod ops;

pub use check::{central_difference, gradcheck, relative_error, GradcheckReport};
pub use conv::Padding;

use crate::error::{Error, Result};
use crate::field::Field;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "tensor shape {shape:?} does not match {} values",
            data.len()
        );
        Self { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self::new(shape, vec![0.0; n])
    }

    pub fn scalar(v: f64) -> Self {
        Self::new(vec![1], vec![v])
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn from_field(field: &Field) -> Self {
        Self::new(field.dims().to_vec(), field.values().to_vec())
    }

    pub fn to_field(&self, dims: &[usize]) -> Result<Field> {
        Field::new(dims.to_vec(), self.data.clone())
    }
}

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

pub(crate) struct BackwardCtx<'a> {
    pub grad: &'a [f64],
    pub inputs: Vec<&'a Tensor>,
    pub output: &'a Tensor,
}

type BackwardFn = Box<dyn Fn(&BackwardCtx) -> Vec<Option<Vec<f64>>>>;

struct Node {
    value: Tensor,
    parents: Vec<usize>,
    backward: Option<BackwardFn>,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of one scalar output with respect to every node.
pub struct Grads {
    grads: Vec<Option<Vec<f64>>>,
}

impl Grads {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }

    /// Gradient of `v`, zeros when the output does not depend on it.
    pub fn get_or_zeros(&self, v: Var, len: usize) -> Vec<f64> {
        self.grads[v.0].clone().unwrap_or_else(|| vec![0.0; len])
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A value that is differentiated against.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, vec![], None, true)
    }

    /// A value treated as fixed.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, vec![], None, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].value.shape
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        let t = self.value(v);
        assert_eq!(t.len(), 1, "not a scalar: shape {:?}", t.shape);
        t.data[0]
    }

    fn push(&mut self, value: Tensor, parents: Vec<usize>, backward: Option<BackwardFn>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            parents,
            backward,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Record an op. `backward` maps the output gradient to one optional
    /// gradient per input (same order as `inputs`).
    pub(crate) fn op(
        &mut self,
        inputs: &[Var],
        value: Tensor,
        backward: impl Fn(&BackwardCtx) -> Vec<Option<Vec<f64>>> + 'static,
    ) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        let parents = inputs.iter().map(|v| v.0).collect();
        if requires_grad {
            self.push(value, parents, Some(Box::new(backward)), true)
        } else {
            self.push(value, parents, None, false)
        }
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&self, output: Var) -> Result<Grads> {
        let out = &self.nodes[output.0].value;
        if out.len() != 1 {
            return Err(Error::InvalidArgument(format!(
                "backward needs a scalar output, got shape {:?}",
                out.shape
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(vec![1.0]);
        for idx in (0..=output.0).rev() {
            let Some(grad) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if let Some(bw) = &node.backward {
                let ctx = BackwardCtx {
                    grad: &grad,
                    inputs: node.parents.iter().map(|&p| &self.nodes[p].value).collect(),
                    output: &node.value,
                };
                let parent_grads = bw(&ctx);
                debug_assert_eq!(parent_grads.len(), node.parents.len());
                for (&p, pg) in node.parents.iter().zip(parent_grads) {
                    let Some(pg) = pg else { continue };
                    if !self.nodes[p].requires_grad {
                        continue;
                    }
                    if let Some(nf) = pg.iter().position(|v| !v.is_finite()) {
                        return Err(Error::Numerical(format!(
                            "non-finite gradient at node {p} entry {nf}"
                        )));
                    }
                    match &mut grads[p] {
                        Some(acc) => acc.iter_mut().zip(&pg).for_each(|(a, g)| *a += g),
                        slot @ None => *slot = Some(pg),
                    }
                }
            }
            grads[idx] = Some(grad);
        }
        Ok(Grads { grads })
    }
}
