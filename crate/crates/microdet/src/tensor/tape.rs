//! Reverse-mode tape.
//!
//! A tape is built dynamically during one forward pass and consumed by one
//! backward pass. Nodes are appended in execution order, so reverse iteration
//! is a valid topological order. A tape is confined to one thread; distinct
//! tapes may run in parallel.

use std::cell::RefCell;
use std::rc::Rc;

use super::{Elem, TensorInner};
use crate::{Error, Result};

pub(crate) type BackFn<T> = Box<dyn FnOnce(&[T], &mut GradSink<'_, T>)>;

pub(crate) struct Node<T: Elem> {
    numel: usize,
    grad: Option<Vec<T>>,
    back: Option<BackFn<T>>,
    /// Present on leaf nodes: gradient flush target.
    leaf: Option<Rc<TensorInner<T>>>,
}

pub(crate) struct TapeInner<T: Elem> {
    nodes: Vec<Node<T>>,
    consumed: bool,
}

/// Accumulates gradient contributions into parent nodes during backward.
pub(crate) struct GradSink<'a, T: Elem> {
    nodes: &'a mut Vec<Node<T>>,
}

impl<T: Elem> GradSink<'_, T> {
    /// Get-or-create the gradient buffer of node `id` and let `f` scatter
    /// contributions into it.
    pub fn with(&mut self, id: usize, f: impl FnOnce(&mut [T])) {
        let node = &mut self.nodes[id];
        let numel = node.numel;
        let g = node.grad.get_or_insert_with(|| vec![T::zero(); numel]);
        f(g);
    }

    /// Elementwise add `contrib` into node `id`'s gradient.
    pub fn accum(&mut self, id: usize, contrib: &[T]) {
        self.with(id, |g| {
            for (gi, ci) in g.iter_mut().zip(contrib) {
                *gi = *gi + *ci;
            }
        });
    }
}

/// Handle to a recording tape. Cheap to clone.
pub struct Tape<T: Elem> {
    pub(crate) inner: Rc<RefCell<TapeInner<T>>>,
}

impl<T: Elem> Clone for Tape<T> {
    fn clone(&self) -> Self {
        Tape {
            inner: Rc::clone(&self.inner),
        }
    }
}

impl<T: Elem> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Elem> Tape<T> {
    pub fn new() -> Self {
        Tape {
            inner: Rc::new(RefCell::new(TapeInner {
                nodes: Vec::new(),
                consumed: false,
            })),
        }
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub(crate) fn push_leaf(&self, tensor: Rc<TensorInner<T>>, numel: usize) -> usize {
        let mut inner = self.inner.borrow_mut();
        inner.nodes.push(Node {
            numel,
            grad: None,
            back: None,
            leaf: Some(tensor),
        });
        inner.nodes.len() - 1
    }

    pub(crate) fn push_op(&self, numel: usize, back: BackFn<T>) -> usize {
        let mut inner = self.inner.borrow_mut();
        inner.nodes.push(Node {
            numel,
            grad: None,
            back: Some(back),
            leaf: None,
        });
        inner.nodes.len() - 1
    }

    /// Runs the reverse sweep from node `root`, accumulating leaf gradients
    /// into their tensors' `grad` buffers. Consumes the tape.
    pub(crate) fn backward_from(&self, root: usize) -> Result<()> {
        let mut inner = self.inner.borrow_mut();
        if inner.consumed {
            return Err(Error::TapeConsumed);
        }
        inner.consumed = true;
        inner.nodes[root].grad = Some(vec![T::one()]);

        for id in (0..inner.nodes.len()).rev() {
            let Some(grad) = inner.nodes[id].grad.take() else {
                continue;
            };
            match inner.nodes[id].back.take() {
                Some(back) => {
                    let mut sink = GradSink {
                        nodes: &mut inner.nodes,
                    };
                    back(&grad, &mut sink);
                }
                None => {
                    if let Some(leaf) = inner.nodes[id].leaf.clone() {
                        let mut slot = leaf.grad.borrow_mut();
                        match slot.as_mut() {
                            Some(acc) => {
                                for (a, g) in acc.iter_mut().zip(&grad) {
                                    *a = *a + *g;
                                }
                            }
                            None => *slot = Some(grad),
                        }
                    }
                }
            }
        }
        inner.nodes.clear();
        Ok(())
    }
}
