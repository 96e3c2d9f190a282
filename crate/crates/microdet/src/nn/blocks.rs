//! Convolution layers and the C3 fusion blocks.

use super::ghost::GhostBottleneck;
use super::vars::{Init, Vars};
use super::Mode;
use crate::tensor::{Elem, Tensor};
use crate::{Error, Result};

pub struct Conv2d<T: Elem> {
    pub weight: Tensor<T>,
    pub bias: Option<Tensor<T>>,
    pub stride: usize,
    pub pad: usize,
    pub groups: usize,
}

impl<T: Elem> Conv2d<T> {
    pub fn new(
        vars: &Vars<T>,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        groups: usize,
        bias: bool,
    ) -> Result<Self> {
        let fan_in = (c_in / groups) * k * k;
        let weight = vars.weight(
            "weight",
            &[c_out, c_in / groups, k, k],
            Init::KaimingUniform { fan_in },
        )?;
        let bias = if bias {
            Some(vars.weight("bias", &[c_out], Init::Const(0.0))?)
        } else {
            None
        };
        Ok(Conv2d {
            weight,
            bias,
            stride,
            pad: k / 2,
            groups,
        })
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        x.conv2d(
            &self.weight,
            self.bias.as_ref(),
            self.stride,
            self.pad,
            self.groups,
        )
    }
}

pub struct BatchNorm2d<T: Elem> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub eps: f64,
    pub momentum: f64,
}

impl<T: Elem> BatchNorm2d<T> {
    pub fn new(vars: &Vars<T>, channels: usize) -> Result<Self> {
        Ok(BatchNorm2d {
            gamma: vars.weight("gamma", &[channels], Init::Const(1.0))?,
            beta: vars.weight("beta", &[channels], Init::Const(0.0))?,
            running_mean: vars.buffer("running_mean", &[channels], 0.0)?,
            running_var: vars.buffer("running_var", &[channels], 1.0)?,
            eps: 1e-5,
            momentum: 0.1,
        })
    }

    pub fn forward(&self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        x.batch_norm(
            &self.gamma,
            &self.beta,
            &self.running_mean,
            &self.running_var,
            self.eps,
            self.momentum,
            mode.is_train(),
        )
    }
}

/// Conv + BN with no activation.
pub struct ConvBn<T: Elem> {
    pub conv: Conv2d<T>,
    pub bn: BatchNorm2d<T>,
}

impl<T: Elem> ConvBn<T> {
    pub fn new(
        vars: &Vars<T>,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        groups: usize,
    ) -> Result<Self> {
        Ok(ConvBn {
            conv: Conv2d::new(&vars.scope("conv"), c_in, c_out, k, stride, groups, false)?,
            bn: BatchNorm2d::new(&vars.scope("bn"), c_out)?,
        })
    }

    pub fn forward(&self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        self.bn.forward(&self.conv.forward(x)?, mode)
    }
}

/// Conv -> BN -> SiLU, the basic unit.
pub struct Cbs<T: Elem> {
    pub inner: ConvBn<T>,
}

impl<T: Elem> Cbs<T> {
    pub fn new(vars: &Vars<T>, c_in: usize, c_out: usize, k: usize, stride: usize) -> Result<Self> {
        if k % 2 == 0 {
            return Err(Error::Config(format!("cbs kernel size {k} must be odd")));
        }
        Ok(Cbs {
            inner: ConvBn::new(vars, c_in, c_out, k, stride, 1)?,
        })
    }

    pub fn forward(&self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        self.inner.forward(x, mode)?.silu()
    }
}

/// Standard residual bottleneck (1x1 reduce, 3x3 expand).
pub struct Bottleneck<T: Elem> {
    cv1: Cbs<T>,
    cv2: Cbs<T>,
    shortcut: bool,
}

impl<T: Elem> Bottleneck<T> {
    pub fn new(vars: &Vars<T>, c_in: usize, c_out: usize, shortcut: bool) -> Result<Self> {
        Ok(Bottleneck {
            cv1: Cbs::new(&vars.scope("cv1"), c_in, c_out, 1, 1)?,
            cv2: Cbs::new(&vars.scope("cv2"), c_out, c_out, 3, 1)?,
            shortcut: shortcut && c_in == c_out,
        })
    }

    pub fn forward(&self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let y = self.cv2.forward(&self.cv1.forward(x, mode)?, mode)?;
        if self.shortcut {
            x.add(&y)
        } else {
            Ok(y)
        }
    }
}

/// Two-path fusion block: one path through `n` bottlenecks, concatenated with
/// a bypass, then a 1x1 projection.
pub struct C3<T: Elem> {
    cv1: Cbs<T>,
    cv2: Cbs<T>,
    m: Vec<Bottleneck<T>>,
    cv3: Cbs<T>,
}

impl<T: Elem> C3<T> {
    pub fn new(
        vars: &Vars<T>,
        c_in: usize,
        c_out: usize,
        n: usize,
        shortcut: bool,
    ) -> Result<Self> {
        let c_h = (c_out / 2).max(1);
        let m = (0..n)
            .map(|i| Bottleneck::new(&vars.scope(&format!("m{i}")), c_h, c_h, shortcut))
            .collect::<Result<Vec<_>>>()?;
        Ok(C3 {
            cv1: Cbs::new(&vars.scope("cv1"), c_in, c_h, 1, 1)?,
            cv2: Cbs::new(&vars.scope("cv2"), c_in, c_h, 1, 1)?,
            m,
            cv3: Cbs::new(&vars.scope("cv3"), 2 * c_h, c_out, 1, 1)?,
        })
    }

    pub fn forward(&self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let mut a = self.cv1.forward(x, mode)?;
        for b in &self.m {
            a = b.forward(&a, mode)?;
        }
        let c = self.cv2.forward(x, mode)?;
        self.cv3.forward(&Tensor::concat(1, &[&a, &c])?, mode)
    }
}

/// C3 with ghost bottlenecks on the main path.
pub struct C3Ghost<T: Elem> {
    cv1: Cbs<T>,
    cv2: Cbs<T>,
    m: Vec<GhostBottleneck<T>>,
    cv3: Cbs<T>,
}

impl<T: Elem> C3Ghost<T> {
    pub fn new(vars: &Vars<T>, c_in: usize, c_out: usize, n: usize) -> Result<Self> {
        let c_h = (c_out / 2).max(2);
        let c_mid = (c_h / 2).max(2) & !1;
        let m = (0..n)
            .map(|i| {
                GhostBottleneck::new(&vars.scope(&format!("ghost{i}")), c_h, c_mid.max(2), c_h, 1)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(C3Ghost {
            cv1: Cbs::new(&vars.scope("cv1"), c_in, c_h, 1, 1)?,
            cv2: Cbs::new(&vars.scope("cv2"), c_in, c_h, 1, 1)?,
            m,
            cv3: Cbs::new(&vars.scope("cv3"), 2 * c_h, c_out, 1, 1)?,
        })
    }

    pub fn forward(&self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let mut a = self.cv1.forward(x, mode)?;
        for b in &self.m {
            a = b.forward(&a, mode)?;
        }
        let c = self.cv2.forward(x, mode)?;
        self.cv3.forward(&Tensor::concat(1, &[&a, &c])?, mode)
    }
}
