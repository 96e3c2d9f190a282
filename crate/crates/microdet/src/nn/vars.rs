//! Hierarchical parameter registry.
//!
//! Every trainable tensor and running buffer is created through a [`Vars`]
//! scope, which assigns it a unique dotted path. The registry's insertion
//! order is the serialization order, and a single RNG stream drawn in
//! creation order makes initialization a pure function of the seed.

use std::cell::RefCell;
use std::rc::Rc;

use indexmap::IndexMap;

use crate::tensor::{Elem, Tape, Tensor};
use crate::{Error, Result, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    /// Optimized by the training loop.
    Weight,
    /// Serialized but never optimized (batch-norm running statistics).
    Buffer,
}

#[derive(Clone)]
pub struct Entry<T: Elem> {
    pub tensor: Tensor<T>,
    pub kind: ParamKind,
}

pub enum Init {
    KaimingUniform { fan_in: usize },
    Normal { sigma: f64 },
    Const(f64),
}

struct Store<T: Elem> {
    entries: IndexMap<String, Entry<T>>,
    rng: Rng,
}

/// A path-scoped handle into the shared parameter store.
pub struct Vars<T: Elem> {
    store: Rc<RefCell<Store<T>>>,
    prefix: String,
}

impl<T: Elem> Clone for Vars<T> {
    fn clone(&self) -> Self {
        Vars {
            store: Rc::clone(&self.store),
            prefix: self.prefix.clone(),
        }
    }
}

impl<T: Elem> Vars<T> {
    pub fn new(seed: u64) -> Self {
        Vars {
            store: Rc::new(RefCell::new(Store {
                entries: IndexMap::new(),
                rng: Rng::new(seed),
            })),
            prefix: String::new(),
        }
    }

    /// Child scope `prefix.name`.
    pub fn scope(&self, name: &str) -> Vars<T> {
        let prefix = if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{}", self.prefix, name)
        };
        Vars {
            store: Rc::clone(&self.store),
            prefix,
        }
    }

    fn path(&self, name: &str) -> String {
        if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{}", self.prefix, name)
        }
    }

    fn register(&self, name: &str, tensor: Tensor<T>, kind: ParamKind) -> Result<Tensor<T>> {
        let path = self.path(name);
        let mut store = self.store.borrow_mut();
        if store.entries.contains_key(&path) {
            return Err(Error::Config(format!("duplicate parameter path `{path}`")));
        }
        store.entries.insert(path, Entry { tensor: tensor.clone(), kind });
        Ok(tensor)
    }

    /// Creates and registers a trainable tensor.
    pub fn weight(&self, name: &str, shape: &[usize], init: Init) -> Result<Tensor<T>> {
        let n: usize = shape.iter().product();
        let data: Vec<T> = {
            let mut store = self.store.borrow_mut();
            match init {
                Init::KaimingUniform { fan_in } => {
                    let bound = (6.0 / fan_in.max(1) as f64).sqrt();
                    (0..n)
                        .map(|_| crate::tensor::c(store.rng.uniform(-bound, bound)))
                        .collect()
                }
                Init::Normal { sigma } => (0..n)
                    .map(|_| crate::tensor::c(store.rng.gauss() * sigma))
                    .collect(),
                Init::Const(v) => vec![crate::tensor::c(v); n],
            }
        };
        self.register(name, Tensor::var(shape, data)?, ParamKind::Weight)
    }

    /// Creates and registers a non-trainable buffer filled with `value`.
    pub fn buffer(&self, name: &str, shape: &[usize], value: f64) -> Result<Tensor<T>> {
        self.register(name, Tensor::full(shape, value), ParamKind::Buffer)
    }

    /// Registers every trainable tensor as a leaf on `tape`.
    pub fn watch_all(&self, tape: &Tape<T>) {
        for entry in self.store.borrow().entries.values() {
            if entry.kind == ParamKind::Weight {
                tape.watch(&entry.tensor);
            }
        }
    }

    pub fn zero_grads(&self) {
        for entry in self.store.borrow().entries.values() {
            entry.tensor.zero_grad();
        }
    }

    /// (path, entry) snapshot in registration order.
    pub fn entries(&self) -> Vec<(String, Entry<T>)> {
        self.store
            .borrow()
            .entries
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect()
    }

    pub fn get(&self, path: &str) -> Option<Entry<T>> {
        self.store.borrow().entries.get(path).cloned()
    }

    pub fn len(&self) -> usize {
        self.store.borrow().entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Total scalar count across trainable tensors.
    pub fn parameter_count(&self) -> usize {
        self.store
            .borrow()
            .entries
            .values()
            .filter(|e| e.kind == ParamKind::Weight)
            .map(|e| e.tensor.numel())
            .sum()
    }
}
