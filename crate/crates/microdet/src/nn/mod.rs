//! Detector building blocks: CBS, ghost convolutions, reparameterizable
//! convolutions, fusion blocks, attention stages and SPPF.

mod blocks;
mod ca;
mod fc;
mod ghost;
mod rep;
mod sppf;
mod transformer;
mod vars;

pub use blocks::{Bottleneck, BatchNorm2d, C3Ghost, Cbs, Conv2d, ConvBn, C3};
pub use ca::CoordAtt;
pub use fc::FcBlock;
pub use ghost::{GhostBottleneck, GhostConv, GhostSpec};
pub use rep::{fold_conv_bn, RepConvN};
pub use sppf::Sppf;
pub use transformer::{layer_norm, TransformerEncoder};
pub use vars::{Entry, Init, ParamKind, Vars};

/// Whether batch-norm layers use batch statistics (and update running
/// buffers) or the frozen running statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

impl Mode {
    pub fn is_train(self) -> bool {
        matches!(self, Mode::Train)
    }
}
