//! Tape-based reverse-mode differentiation.
//!
//! Every operation executed through a [`Graph`] appends one node holding its
//! output value, the indices of its inputs and (when any input requires a
//! gradient) a backward rule. Inputs always precede outputs on the tape, so a
//! single reverse sweep visits each node once.

use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Values available to a backward rule.
pub struct BackwardCtx<'a> {
    pub inputs: Vec<&'a Tensor>,
    pub output: &'a Tensor,
    pub needs: Vec<bool>,
}

/// Vector-Jacobian product of one recorded operation.
pub trait Backward {
    /// Returns one entry per input; `None` where `ctx.needs[i]` is false.
    fn backward(&self, ctx: &BackwardCtx<'_>, grad: &[f64]) -> Vec<Option<Vec<f64>>>;
}

struct Node {
    value: Tensor,
    inputs: Vec<usize>,
    rule: Option<Box<dyn Backward>>,
    requires_grad: bool,
    param: Option<ParamId>,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    no_grad: bool,
    kinks: Option<u64>,
}

/// Gradients produced by [`Graph::backward`], indexed by node.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    visited: usize,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Number of nodes whose backward rule ran.
    pub fn visited(&self) -> usize {
        self.visited
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    /// A graph whose parameter leaves are plain constants, so nothing is
    /// retained for a backward pass.
    pub fn inference() -> Self {
        Self {
            nodes: Vec::new(),
            no_grad: true,
            kinks: None,
        }
    }

    /// Starts recording which side of its kink every element of a
    /// piecewise op falls on.
    pub fn track_kinks(&mut self) {
        self.kinks.get_or_insert(0xCBF2_9CE4_8422_2325);
    }

    /// Hash of the recorded kink sides; equal signatures mean the same
    /// smooth piece of every piecewise op was active.
    pub fn kink_signature(&self) -> Option<u64> {
        self.kinks
    }

    pub(crate) fn note_kinks(&mut self, x: Var, at: f64) {
        if let Some(h) = self.kinks.as_mut() {
            for &v in self.nodes[x.0].value.data() {
                *h = (*h ^ u64::from(v >= at)).wrapping_mul(0x0000_0100_0000_01B3);
            }
            *h = (*h ^ 0xFF).wrapping_mul(0x0000_0100_0000_01B3);
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push_leaf(&mut self, value: Tensor, requires_grad: bool, param: Option<ParamId>) -> Var {
        self.nodes.push(Node {
            value,
            inputs: Vec::new(),
            rule: None,
            requires_grad,
            param,
        });
        Var(self.nodes.len() - 1)
    }

    /// Non-differentiable input.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_leaf(value, false, None)
    }

    /// Leaf that receives a gradient.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push_leaf(value, true, None)
    }

    /// While set, [`Graph::param`] binds parameters as constants. Inputs
    /// that require gradients still propagate them.
    pub fn freeze_params(&mut self, frozen: bool) {
        self.no_grad = frozen;
    }

    /// Leaf bound to a stored parameter; its gradient flows back through
    /// [`ParamStore::accumulate`].
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if self.no_grad {
            return self.constant(store.value(id).clone());
        }
        self.push_leaf(store.value(id).clone(), true, Some(id))
    }

    /// Copies the value of `v` into a fresh constant, cutting the tape.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.nodes[v.0].value.clone();
        self.constant(value)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn inputs_of(&self, v: Var) -> Vec<Var> {
        self.nodes[v.0].inputs.iter().map(|&i| Var(i)).collect()
    }

    /// Records an operation. The rule is dropped when no input needs a gradient.
    pub fn record(&mut self, output: Tensor, inputs: &[Var], rule: Box<dyn Backward>) -> Var {
        debug_assert!(
            output.is_finite(),
            "non-finite value after forward op (node {})",
            self.nodes.len()
        );
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value: output,
            inputs: inputs.iter().map(|v| v.0).collect(),
            rule: if requires_grad { Some(rule) } else { None },
            requires_grad,
            param: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// Reverse sweep from a scalar objective.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let out = &self.nodes[loss.0].value;
        if out.len() != 1 {
            return Err(Error::NonScalar(out.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = Vec::with_capacity(loss.0 + 1);
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(vec![1.0]);
        let mut visited = 0;
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            let Some(rule) = node.rule.as_ref() else {
                continue;
            };
            let Some(grad) = grads[idx].take() else {
                continue;
            };
            visited += 1;
            let ctx = BackwardCtx {
                inputs: node.inputs.iter().map(|&i| &self.nodes[i].value).collect(),
                output: &node.value,
                needs: node
                    .inputs
                    .iter()
                    .map(|&i| self.nodes[i].requires_grad)
                    .collect(),
            };
            let input_grads = rule.backward(&ctx, &grad);
            debug_assert_eq!(input_grads.len(), node.inputs.len());
            for (&inp, g) in node.inputs.iter().zip(input_grads) {
                let Some(g) = g else { continue };
                if !self.nodes[inp].requires_grad {
                    continue;
                }
                debug_assert_eq!(g.len(), self.nodes[inp].value.len());
                match &mut grads[inp] {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                    slot @ None => *slot = Some(g),
                }
            }
            grads[idx] = Some(grad);
        }
        Ok(Gradients { grads, visited })
    }

    pub(crate) fn param_leaves(&self) -> impl Iterator<Item = (Var, ParamId)> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| n.param.map(|p| (Var(i), p)))
    }
}
