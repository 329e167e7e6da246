//! The autodiff tape: an append-only graph of tensors.
//!
//! Nodes are appended in forward order, so reverse index order is a valid
//! reverse topological order for backpropagation. Each non-leaf node stores
//! a backward closure that maps the output gradient to one gradient tensor
//! per parent; closures read parent values through [`BackwardArgs`] instead
//! of capturing them.

use std::cell::RefCell;

use ndarray::IxDyn;

use super::{NnError, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

/// What a backward closure gets to see.
pub struct BackwardArgs<'a> {
    /// Forward value of this node.
    pub value: &'a Tensor,
    /// Gradient of the loss with respect to this node.
    pub grad: &'a Tensor,
    /// Forward values of the parents, in recording order.
    pub parents: &'a [&'a Tensor],
}

pub(crate) type BackFn = Box<dyn Fn(&BackwardArgs<'_>) -> Vec<Tensor>>;

struct Node {
    value: Tensor,
    parents: Vec<usize>,
    back: Option<BackFn>,
}

/// Append-only forward graph.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Record an input or parameter tensor.
    pub fn leaf(&self, value: Tensor) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            parents: Vec::new(),
            back: None,
        });
        Var(nodes.len() - 1)
    }

    /// Record a scalar constant as a 0-d tensor.
    pub fn scalar_leaf(&self, value: f64) -> Var {
        self.leaf(Tensor::from_elem(IxDyn(&[]), value))
    }

    pub(crate) fn push(&self, value: Tensor, parents: Vec<Var>, back: BackFn) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            parents: parents.into_iter().map(|v| v.0).collect(),
            back: Some(back),
        });
        Var(nodes.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    /// Clone of a node's forward value.
    pub fn value(&self, v: Var) -> Tensor {
        self.nodes.borrow()[v.0].value.clone()
    }

    pub fn shape(&self, v: Var) -> Vec<usize> {
        self.nodes.borrow()[v.0].value.shape().to_vec()
    }

    /// Read a single-element node as f64.
    pub fn scalar(&self, v: Var) -> f64 {
        let nodes = self.nodes.borrow();
        let t = &nodes[v.0].value;
        debug_assert_eq!(t.len(), 1, "scalar() on non-scalar node");
        *t.iter().next().expect("nonempty tensor")
    }

    /// Run the computation inside `f` with read access to a node's value.
    pub fn with_value<R>(&self, v: Var, f: impl FnOnce(&Tensor) -> R) -> R {
        f(&self.nodes.borrow()[v.0].value)
    }

    /// Reverse-mode sweep from a scalar root. Returns the gradient of the
    /// root with respect to every node that participates in its history.
    pub fn backward(&self, root: Var) -> Result<Gradients, NnError> {
        let nodes = self.nodes.borrow();
        let root_shape = nodes[root.0].value.shape().to_vec();
        if nodes[root.0].value.len() != 1 {
            return Err(NnError::NonScalarRoot(root_shape));
        }
        let mut grads: Vec<Option<Tensor>> = (0..nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor::from_elem(IxDyn(&root_shape), 1.0));

        for i in (0..=root.0).rev() {
            let node = &nodes[i];
            let Some(back) = node.back.as_ref() else {
                continue;
            };
            let Some(grad) = grads[i].take() else {
                continue;
            };
            let parent_values: Vec<&Tensor> =
                node.parents.iter().map(|&p| &nodes[p].value).collect();
            let args = BackwardArgs {
                value: &node.value,
                grad: &grad,
                parents: &parent_values,
            };
            let contribs = back(&args);
            debug_assert_eq!(contribs.len(), node.parents.len());
            for (&p, c) in node.parents.iter().zip(contribs) {
                debug_assert_eq!(
                    c.shape(),
                    nodes[p].value.shape(),
                    "gradient shape mismatch into parent"
                );
                match &mut grads[p] {
                    Some(acc) => *acc += &c,
                    slot @ None => *slot = Some(c),
                }
            }
            grads[i] = Some(grad);
        }
        Ok(Gradients { grads })
    }
}

/// Gradients from one backward sweep, indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient with respect to `v`, if `v` participated in the loss.
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }
}
