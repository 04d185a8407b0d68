use std::cell::{Cell, RefCell};
use std::collections::HashMap;
use std::fmt;
use std::rc::Rc;

use crate::{Real, Result, Tensor, TensorError};

/// Vector-Jacobian product of one recorded operation.
///
/// Receives the gradient of the loss with respect to the operation's output
/// and a mask telling which inputs need a gradient; returns one entry per
/// input, `None` where no gradient is needed or the input is not
/// differentiable.
pub type BackwardFn<T> = Box<dyn Fn(&Tensor<T>, &[bool]) -> Vec<Option<Tensor<T>>>>;

struct Node<T> {
    op: &'static str,
    value: Rc<Tensor<T>>,
    inputs: Vec<usize>,
    requires_grad: bool,
    leaf: bool,
    backward: Option<BackwardFn<T>>,
}

/// Single-threaded differentiation tape. Node ids are assigned in creation
/// order, which is a topological order of the recorded DAG.
pub struct Graph<T: Real> {
    nodes: RefCell<Vec<Node<T>>>,
    retain: bool,
    consumed: Cell<bool>,
}

/// Handle to a value recorded on a [`Graph`].
pub struct Var<'g, T: Real> {
    graph: &'g Graph<T>,
    id: usize,
}

impl<T: Real> Clone for Var<'_, T> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<T: Real> Copy for Var<'_, T> {}

impl<T: Real> fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let nodes = self.graph.nodes.borrow();
        let node = &nodes[self.id];
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("op", &node.op)
            .field("shape", &node.value.shape())
            .finish()
    }
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Graph<T> {
    /// A graph whose saved intermediates are released after one backward pass.
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            retain: false,
            consumed: Cell::new(false),
        }
    }

    /// A graph that may be differentiated several times.
    pub fn retained() -> Self {
        Self {
            retain: true,
            ..Self::new()
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Trainable leaf: gradients are reported for it.
    pub fn param(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push_node("param", Rc::new(value), Vec::new(), true, true, None)
    }

    /// Non-differentiable leaf.
    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push_node("constant", Rc::new(value), Vec::new(), false, true, None)
    }

    /// Records an operation. The backward closure is dropped when no input
    /// requires a gradient.
    pub fn op<'g>(
        &'g self,
        name: &'static str,
        value: impl Into<Rc<Tensor<T>>>,
        inputs: &[Var<'g, T>],
        backward: BackwardFn<T>,
    ) -> Var<'g, T> {
        let ids: Vec<usize> = inputs
            .iter()
            .map(|v| {
                assert!(std::ptr::eq(v.graph, self), "{}", TensorError::ForeignVar);
                v.id
            })
            .collect();
        let requires_grad = {
            let nodes = self.nodes.borrow();
            ids.iter().any(|&i| nodes[i].requires_grad)
        };
        let backward = requires_grad.then_some(backward);
        self.push_node(name, value.into(), ids, requires_grad, false, backward)
    }

    /// Same value as `x`, cut off from gradient flow.
    pub fn detach<'g>(&'g self, x: Var<'g, T>) -> Var<'g, T> {
        let value = x.value();
        self.push_node("detach", value, Vec::new(), false, true, None)
    }

    fn push_node(
        &self,
        op: &'static str,
        value: Rc<Tensor<T>>,
        inputs: Vec<usize>,
        requires_grad: bool,
        leaf: bool,
        backward: Option<BackwardFn<T>>,
    ) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            op,
            value,
            inputs,
            requires_grad,
            leaf,
            backward,
        });
        Var {
            graph: self,
            id: nodes.len() - 1,
        }
    }

    /// Reverse-mode pass from a scalar loss. Every trainable leaf gets an
    /// entry in the result, zero-filled when it does not influence the loss.
    pub fn backward(&self, loss: Var<'_, T>) -> Result<Gradients<T>> {
        if !std::ptr::eq(loss.graph, self) {
            return Err(TensorError::ForeignVar);
        }
        if self.consumed.get() {
            return Err(TensorError::GraphConsumed);
        }
        let mut nodes = self.nodes.borrow_mut();
        let loss_value = &nodes[loss.id].value;
        if loss_value.numel() != 1 {
            return Err(TensorError::NonScalarLoss(loss_value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.id] = Some(Tensor::full(loss_value.shape().to_vec(), T::one()));

        for id in (0..=loss.id).rev() {
            let Some(grad) = grads[id].take() else {
                continue;
            };
            let node = &nodes[id];
            if let Some(backward) = &node.backward {
                let needs: Vec<bool> = node
                    .inputs
                    .iter()
                    .map(|&i| nodes[i].requires_grad)
                    .collect();
                let input_grads = backward(&grad, &needs);
                debug_assert_eq!(input_grads.len(), node.inputs.len(), "{}", node.op);
                for ((&input, g), &need) in node.inputs.iter().zip(input_grads).zip(&needs) {
                    let Some(g) = g else { continue };
                    if !need {
                        continue;
                    }
                    debug_assert_eq!(
                        g.shape(),
                        nodes[input].value.shape(),
                        "gradient shape from {}",
                        node.op
                    );
                    match &mut grads[input] {
                        Some(acc) => acc.add_assign(&g),
                        slot => *slot = Some(g),
                    }
                }
            }
            if node.leaf {
                grads[id] = Some(grad);
            }
        }

        let mut by_leaf = HashMap::new();
        for (id, node) in nodes.iter().enumerate() {
            if node.leaf && node.requires_grad {
                let g = grads[id]
                    .take()
                    .unwrap_or_else(|| Tensor::zeros(node.value.shape().to_vec()));
                by_leaf.insert(id, g);
            }
        }

        if !self.retain {
            self.consumed.set(true);
            for node in nodes.iter_mut() {
                node.backward = None;
            }
        }
        Ok(Gradients { by_leaf })
    }
}

impl<'g, T: Real> Var<'g, T> {
    pub fn graph(&self) -> &'g Graph<T> {
        self.graph
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Rc<Tensor<T>> {
        Rc::clone(&self.graph.nodes.borrow()[self.id].value)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.graph.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.graph.nodes.borrow()[self.id].requires_grad
    }

    pub fn detach(self) -> Var<'g, T> {
        self.graph.detach(self)
    }
}

/// Gradients of the loss with respect to every trainable leaf.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    by_leaf: HashMap<usize, Tensor<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, var: Var<'_, T>) -> Option<&Tensor<T>> {
        self.by_leaf.get(&var.id)
    }

    /// Gradient for a trainable leaf. Panics for non-leaf or constant vars.
    pub fn wrt(&self, var: Var<'_, T>) -> &Tensor<T> {
        self.get(var)
            .unwrap_or_else(|| panic!("no gradient recorded for var {}", var.id))
    }

    pub fn remove(&mut self, var: Var<'_, T>) -> Option<Tensor<T>> {
        self.by_leaf.remove(&var.id)
    }

    pub fn len(&self) -> usize {
        self.by_leaf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_leaf.is_empty()
    }
}
