//! Dense tensors with reverse-mode automatic differentiation.
//!
//! A [`Tensor`] is a cheaply clonable handle to an immutable row-major
//! buffer. Operations recorded while any input is attached to a live
//! [`Tape`] build a dynamic graph; [`Tensor::backward`] replays it once and
//! accumulates gradients into the watched leaves.

mod conv;
mod elem;
mod gradcheck;
pub mod macs;
mod ops;
mod shape;
mod special;
mod tape;
#[cfg(test)]
mod tests;

pub use elem::{c, Dtype, Elem};
pub use gradcheck::{grad_check, grad_check_seeded, GradCheck};
pub use ops::ActKind;
pub use tape::Tape;

pub(crate) use shape::{broadcast, for_each_broadcast2, numel, strides};

use std::cell::RefCell;
use std::rc::{Rc, Weak};

use crate::{Error, Result, Rng};
use tape::TapeInner;

pub(crate) struct TensorInner<T: Elem> {
    shape: Vec<usize>,
    data: RefCell<Vec<T>>,
    pub(crate) grad: RefCell<Option<Vec<T>>>,
    requires_grad: bool,
    node: RefCell<Option<NodeRef<T>>>,
}

struct NodeRef<T: Elem> {
    tape: Weak<RefCell<TapeInner<T>>>,
    id: usize,
}

/// N-dimensional dense tensor (NCHW layout for feature maps).
pub struct Tensor<T: Elem> {
    pub(crate) inner: Rc<TensorInner<T>>,
}

impl<T: Elem> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Tensor {
            inner: Rc::clone(&self.inner),
        }
    }
}

impl<T: Elem> std::fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.inner.shape)
            .field("requires_grad", &self.inner.requires_grad)
            .finish()
    }
}

impl<T: Elem> Tensor<T> {
    fn from_parts(shape: Vec<usize>, data: Vec<T>, requires_grad: bool) -> Self {
        debug_assert_eq!(numel(&shape), data.len());
        Tensor {
            inner: Rc::new(TensorInner {
                shape,
                data: RefCell::new(data),
                grad: RefCell::new(None),
                requires_grad,
                node: RefCell::new(None),
            }),
        }
    }

    /// Constant tensor (never accumulates gradient).
    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        if numel(shape) != data.len() {
            return Err(Error::shape(
                "from_vec",
                format!("shape {shape:?} needs {} elements, got {}", numel(shape), data.len()),
            ));
        }
        Ok(Self::from_parts(shape.to_vec(), data, false))
    }

    /// Differentiable leaf (parameter). Accumulates gradient once watched by
    /// a tape.
    pub fn var(shape: &[usize], data: Vec<T>) -> Result<Self> {
        if numel(shape) != data.len() {
            return Err(Error::shape(
                "var",
                format!("shape {shape:?} needs {} elements, got {}", numel(shape), data.len()),
            ));
        }
        Ok(Self::from_parts(shape.to_vec(), data, true))
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::from_parts(shape.to_vec(), vec![T::zero(); numel(shape)], false)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Self::from_parts(shape.to_vec(), vec![c(value); numel(shape)], false)
    }

    pub fn scalar(value: f64) -> Self {
        Self::from_parts(vec![1], vec![c(value)], false)
    }

    /// Uniform in [lo, hi), drawn from `rng`.
    pub fn rand_uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut Rng) -> Self {
        let data = (0..numel(shape)).map(|_| c(rng.uniform(lo, hi))).collect();
        Self::from_parts(shape.to_vec(), data, false)
    }

    /// N(0, sigma^2), drawn from `rng`.
    pub fn randn(shape: &[usize], sigma: f64, rng: &mut Rng) -> Self {
        let data = (0..numel(shape)).map(|_| c(rng.gauss() * sigma)).collect();
        Self::from_parts(shape.to_vec(), data, false)
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn rank(&self) -> usize {
        self.inner.shape.len()
    }

    pub fn numel(&self) -> usize {
        numel(&self.inner.shape)
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    /// Copy of the underlying buffer.
    pub fn to_vec(&self) -> Vec<T> {
        self.inner.data.borrow().clone()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> T {
        debug_assert_eq!(self.numel(), 1);
        self.inner.data.borrow()[0]
    }

    /// Read access to the buffer without copying.
    pub fn with_data<R>(&self, f: impl FnOnce(&[T]) -> R) -> R {
        f(&self.inner.data.borrow())
    }

    /// In-place mutation of the buffer (optimizer updates, test setups).
    /// Must not be called between a recorded forward and its backward.
    pub fn update_data(&self, f: impl FnOnce(&mut [T])) {
        f(&mut self.inner.data.borrow_mut());
    }

    pub fn set_data(&self, values: &[T]) {
        let mut d = self.inner.data.borrow_mut();
        assert_eq!(d.len(), values.len(), "set_data length mismatch");
        d.copy_from_slice(values);
    }

    pub fn fill(&self, value: f64) {
        self.update_data(|d| d.iter_mut().for_each(|x| *x = c(value)));
    }

    /// Copy of the accumulated gradient, if any.
    pub fn grad(&self) -> Option<Vec<T>> {
        self.inner.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.inner.grad.borrow_mut() = None;
    }

    /// True if both handles refer to the same storage.
    pub fn same_storage(&self, other: &Tensor<T>) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }

    /// Detached constant view of this tensor's current values.
    pub fn detach(&self) -> Tensor<T> {
        Tensor::from_parts(self.inner.shape.clone(), self.to_vec(), false)
    }

    pub(crate) fn node_on(&self, tape: &Rc<RefCell<TapeInner<T>>>) -> Option<usize> {
        let node = self.inner.node.borrow();
        node.as_ref().and_then(|n| {
            let live = n.tape.upgrade()?;
            Rc::ptr_eq(&live, tape).then_some(n.id)
        })
    }

    fn live_tape(&self) -> Option<Rc<RefCell<TapeInner<T>>>> {
        self.inner.node.borrow().as_ref().and_then(|n| n.tape.upgrade())
    }

    pub(crate) fn attach(&self, tape: &Rc<RefCell<TapeInner<T>>>, id: usize) {
        *self.inner.node.borrow_mut() = Some(NodeRef {
            tape: Rc::downgrade(tape),
            id,
        });
    }

    /// Runs backward from this scalar loss, populating leaf gradients.
    /// Consumes the tape this tensor was recorded on.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::NonScalarLoss { numel: self.numel() });
        }
        let tape = self.live_tape().ok_or(Error::DetachedGraph)?;
        let id = self
            .node_on(&tape)
            .expect("live tape implies node id");
        Tape { inner: tape }.backward_from(id)
    }
}

impl<T: Elem> Tape<T> {
    /// Registers `t` as a differentiable leaf on this tape.
    ///
    /// No-op if the tensor is already watched here; constants are ignored.
    pub fn watch(&self, t: &Tensor<T>) {
        if !t.requires_grad() || t.node_on(&self.inner).is_some() {
            return;
        }
        let id = self.push_leaf(Rc::clone(&t.inner), t.numel());
        t.attach(&self.inner, id);
    }
}

/// Finds the live tape shared by `inputs` (if any), auto-watching any
/// differentiable leaves among them, and returns per-input node ids.
pub(crate) fn recording_of<T: Elem>(
    inputs: &[&Tensor<T>],
) -> Result<Option<(Tape<T>, Vec<Option<usize>>)>> {
    let mut tape: Option<Rc<RefCell<TapeInner<T>>>> = None;
    for t in inputs {
        if let Some(live) = t.live_tape() {
            match &tape {
                None => tape = Some(live),
                Some(existing) => {
                    if !Rc::ptr_eq(existing, &live) {
                        return Err(Error::TapeMismatch);
                    }
                }
            }
        }
    }
    let Some(tape) = tape else {
        return Ok(None);
    };
    let tape = Tape { inner: tape };
    let ids = inputs
        .iter()
        .map(|t| {
            if t.requires_grad() {
                tape.watch(t);
            }
            t.node_on(&tape.inner)
        })
        .collect();
    Ok(Some((tape, ids)))
}
