//! Thread-local multiply-accumulate counter.
//!
//! `conv2d` and `matmul` bump this on every call, so wrapping a forward pass
//! in [`reset`]/[`take`] measures its arithmetic cost without touching the
//! kernels themselves.

use std::cell::Cell;

thread_local! {
    static MACS: Cell<u64> = const { Cell::new(0) };
}

pub fn reset() {
    MACS.with(|m| m.set(0));
}

pub fn take() -> u64 {
    MACS.with(|m| m.get())
}

pub(crate) fn add(n: u64) {
    MACS.with(|m| m.set(m.get() + n));
}
