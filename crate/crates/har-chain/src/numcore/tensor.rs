//! Reverse-mode autodiff tensor.
//!
//! A [`Tensor`] is a row-major f64 buffer plus an optional backward-graph
//! record. Operations in [`super::ops`] build an acyclic graph; [`backward`]
//! walks it once in reverse topological order, accumulating gradients into
//! every `requires_grad` leaf. The graph is freed as it is consumed, so a
//! second `backward` over the same graph is an error.

use std::cell::{Cell, Ref, RefCell};
use std::collections::{HashMap, HashSet};
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

thread_local! {
    static NO_GRAD: Cell<bool> = const { Cell::new(false) };
}

/// Run `f` without recording any backward graph (inference mode).
pub fn no_grad<T>(f: impl FnOnce() -> T) -> T {
    NO_GRAD.with(|flag| {
        let prev = flag.get();
        flag.set(true);
        let out = f();
        flag.set(prev);
        out
    })
}

/// Gradient rule of one op: maps the output gradient to per-input gradients
/// (in the same order as `Node::inputs`; `None` for non-differentiable slots).
pub(crate) type BackwardFn = Box<dyn FnOnce(&[f64], &[Tensor]) -> Vec<Option<Vec<f64>>>>;

pub(crate) struct Node {
    inputs: Vec<Tensor>,
    backward: BackwardFn,
}

struct Inner {
    id: u64,
    shape: Vec<usize>,
    values: RefCell<Vec<f64>>,
    requires_grad: bool,
    grad: RefCell<Option<Vec<f64>>>,
    node: RefCell<Option<Node>>,
    consumed: Cell<bool>,
}

#[derive(Clone)]
pub struct Tensor {
    inner: Rc<Inner>,
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("id", &self.inner.id)
            .field("shape", &self.inner.shape)
            .field("requires_grad", &self.inner.requires_grad)
            .finish()
    }
}

impl Tensor {
    fn new(values: Vec<f64>, shape: Vec<usize>, requires_grad: bool) -> Self {
        debug_assert_eq!(values.len(), shape.iter().product::<usize>());
        Tensor {
            inner: Rc::new(Inner {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                values: RefCell::new(values),
                requires_grad,
                grad: RefCell::new(None),
                node: RefCell::new(None),
                consumed: Cell::new(false),
            }),
        }
    }

    /// Constant (non-differentiable) tensor.
    pub fn from_vec(values: Vec<f64>, shape: Vec<usize>) -> Result<Self> {
        if values.len() != shape.iter().product::<usize>() {
            return Err(Error::ShapeMismatch(format!(
                "{} values cannot fill shape {:?}",
                values.len(),
                shape
            )));
        }
        Ok(Tensor::new(values, shape, false))
    }

    /// Trainable leaf: participates in `backward` and receives a gradient.
    pub fn param(values: Vec<f64>, shape: Vec<usize>) -> Result<Self> {
        if values.len() != shape.iter().product::<usize>() {
            return Err(Error::ShapeMismatch(format!(
                "{} values cannot fill shape {:?}",
                values.len(),
                shape
            )));
        }
        Ok(Tensor::new(values, shape, true))
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor::new(vec![0.0; n], shape, false)
    }

    pub fn scalar(v: f64) -> Self {
        Tensor::new(vec![v], vec![], false)
    }

    pub(crate) fn from_op(
        values: Vec<f64>,
        shape: Vec<usize>,
        inputs: Vec<Tensor>,
        backward: BackwardFn,
    ) -> Self {
        let t = Tensor::new(values, shape, false);
        let tracking = !NO_GRAD.with(|f| f.get()) && inputs.iter().any(|i| i.needs_grad());
        if tracking {
            *t.inner.node.borrow_mut() = Some(Node { inputs, backward });
        }
        t
    }

    pub fn id(&self) -> u64 {
        self.inner.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn len(&self) -> usize {
        self.inner.values.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_scalar(&self) -> bool {
        self.len() == 1
    }

    /// Borrow the value buffer (row-major).
    pub fn values(&self) -> Ref<'_, Vec<f64>> {
        self.inner.values.borrow()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.inner.values.borrow().clone()
    }

    /// Scalar value. Panics if the tensor has more than one element.
    pub fn item(&self) -> f64 {
        let v = self.inner.values.borrow();
        assert_eq!(v.len(), 1, "item() on non-scalar tensor");
        v[0]
    }

    /// Overwrite the buffer in place (optimizer updates, weight loading).
    pub fn set_values(&self, values: &[f64]) {
        let mut v = self.inner.values.borrow_mut();
        assert_eq!(v.len(), values.len(), "set_values length mismatch");
        v.copy_from_slice(values);
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    pub(crate) fn needs_grad(&self) -> bool {
        self.inner.requires_grad || self.inner.node.borrow().is_some()
    }

    pub fn grad(&self) -> Option<Vec<f64>> {
        self.inner.grad.borrow().clone()
    }

    /// Move the accumulated gradient out, leaving `None`.
    pub fn take_grad(&self) -> Option<Vec<f64>> {
        self.inner.grad.borrow_mut().take()
    }

    pub fn zero_grad(&self) {
        *self.inner.grad.borrow_mut() = None;
    }

    fn accumulate_grad(&self, g: &[f64]) {
        let mut slot = self.inner.grad.borrow_mut();
        match slot.as_mut() {
            Some(acc) => {
                for (a, x) in acc.iter_mut().zip(g.iter()) {
                    *a += x;
                }
            }
            None => *slot = Some(g.to_vec()),
        }
    }
}

/// Run backpropagation from a scalar loss.
///
/// Gradients accumulate (`+=`) along all paths into every `requires_grad`
/// leaf reachable from `loss`; intermediate nodes are visited exactly once in
/// reverse topological order and their graph records are dropped as they are
/// consumed.
pub fn backward(loss: &Tensor) -> Result<()> {
    if !loss.is_scalar() {
        return Err(Error::NonScalarBackward {
            shape: loss.shape().to_vec(),
        });
    }
    if loss.inner.consumed.get() {
        return Err(Error::GraphConsumed);
    }

    // Post-order DFS over tensors that carry nodes; leaves collected on the way.
    enum Visit {
        Enter(Tensor),
        Exit(Tensor),
    }
    let mut topo: Vec<Tensor> = Vec::new();
    let mut leaves: Vec<Tensor> = Vec::new();
    let mut seen: HashSet<u64> = HashSet::new();
    let mut stack = vec![Visit::Enter(loss.clone())];
    while let Some(v) = stack.pop() {
        match v {
            Visit::Enter(t) => {
                if !seen.insert(t.id()) {
                    continue;
                }
                let has_node = t.inner.node.borrow().is_some();
                if has_node {
                    stack.push(Visit::Exit(t.clone()));
                    let node = t.inner.node.borrow();
                    for input in &node.as_ref().unwrap().inputs {
                        if input.inner.node.borrow().is_some() {
                            stack.push(Visit::Enter(input.clone()));
                        } else if input.requires_grad() && seen.insert(input.id()) {
                            leaves.push(input.clone());
                        }
                    }
                } else if t.requires_grad() {
                    leaves.push(t.clone());
                }
            }
            Visit::Exit(t) => topo.push(t),
        }
    }

    let mut grads: HashMap<u64, Vec<f64>> = HashMap::new();
    grads.insert(loss.id(), vec![1.0]);
    loss.inner.consumed.set(true);

    for t in topo.iter().rev() {
        let node = t.inner.node.borrow_mut().take();
        t.inner.consumed.set(true);
        let Some(node) = node else { continue };
        let g = match grads.remove(&t.id()) {
            Some(g) => g,
            None => continue, // unreachable along nonzero paths
        };
        if g.iter().all(|&x| x == 0.0) {
            continue; // nothing to propagate
        }
        let input_grads = (node.backward)(&g, &node.inputs);
        debug_assert_eq!(input_grads.len(), node.inputs.len());
        for (input, ig) in node.inputs.iter().zip(input_grads) {
            let Some(ig) = ig else { continue };
            if !input.needs_grad() && !seen.contains(&input.id()) {
                continue;
            }
            debug_assert_eq!(ig.len(), input.len());
            grads
                .entry(input.id())
                .and_modify(|acc| {
                    for (a, x) in acc.iter_mut().zip(ig.iter()) {
                        *a += x;
                    }
                })
                .or_insert(ig);
        }
    }

    for leaf in &leaves {
        match grads.remove(&leaf.id()) {
            Some(g) => leaf.accumulate_grad(&g),
            None => leaf.accumulate_grad(&vec![0.0; leaf.len()]),
        }
    }
    Ok(())
}
