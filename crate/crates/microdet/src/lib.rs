//! Desk-scale small-defect detection laboratory.
//!
//! Everything runs on the CPU from a single seed: a dense-tensor autodiff
//! engine ([`tensor`]), the detector building blocks ([`nn`]), a three-scale
//! grid detector with toggleable ghost convolutions, rep-fused neck and
//! attention stages ([`detect`]), box similarity losses including the
//! normalized Wasserstein distance ([`loss`]), detection metrics
//! ([`metrics`]), a synthetic flat-panel defect dataset ([`data`]) and the
//! training loop ([`train`]).

pub mod boxes;
pub mod data;
pub mod detect;
pub mod error;
pub mod loss;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod tensor;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
pub use rng::Rng;
pub use tensor::{Tape, Tensor};
