//! Spatial kernels: convolution, pooling, nearest upsampling, batch norm.
//!
//! Convolution is cross-correlation (no kernel flip) over NCHW feature maps
//! with OIHW kernels, lowered to im2col + matmul.

use super::ops::{mm, record};
use super::{macs, Elem, Tensor};
use crate::{Error, Result};

struct ConvDims {
    n: usize,
    c_in: usize,
    h: usize,
    w: usize,
    c_out: usize,
    kh: usize,
    kw: usize,
    ho: usize,
    wo: usize,
    groups: usize,
}

fn conv_dims<T: Elem>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    stride: usize,
    pad: usize,
    groups: usize,
) -> Result<ConvDims> {
    let xs = x.shape();
    let ws = weight.shape();
    if xs.len() != 4 || ws.len() != 4 {
        return Err(Error::shape(
            "conv2d",
            format!("expected NCHW input and OIHW kernel, got {xs:?} and {ws:?}"),
        ));
    }
    let (n, c_in, h, w) = (xs[0], xs[1], xs[2], xs[3]);
    let (c_out, ci_g, kh, kw) = (ws[0], ws[1], ws[2], ws[3]);
    if stride == 0 || groups == 0 {
        return Err(Error::shape("conv2d", "stride and groups must be positive"));
    }
    if c_in % groups != 0 {
        return Err(Error::shape(
            "conv2d",
            format!("input channels {c_in} not divisible by groups {groups}"),
        ));
    }
    if c_out % groups != 0 {
        return Err(Error::shape(
            "conv2d",
            format!("output channels {c_out} not divisible by groups {groups}"),
        ));
    }
    if ci_g != c_in / groups {
        return Err(Error::shape(
            "conv2d",
            format!(
                "kernel input dim {ci_g} != input channels {c_in} / groups {groups}"
            ),
        ));
    }
    if h + 2 * pad < kh || w + 2 * pad < kw {
        return Err(Error::shape(
            "conv2d",
            format!("kernel {kh}x{kw} larger than padded input {}x{}", h + 2 * pad, w + 2 * pad),
        ));
    }
    let ho = (h + 2 * pad - kh) / stride + 1;
    let wo = (w + 2 * pad - kw) / stride + 1;
    if ho == 0 || wo == 0 {
        return Err(Error::shape(
            "conv2d",
            format!("non-positive output dims {ho}x{wo}"),
        ));
    }
    Ok(ConvDims {
        n,
        c_in,
        h,
        w,
        c_out,
        kh,
        kw,
        ho,
        wo,
        groups,
    })
}

/// Lowers one image's group slice into (ci_g*kh*kw, ho*wo) patch columns.
#[allow(clippy::too_many_arguments)]
fn im2col<T: Elem>(
    x: &[T],
    col: &mut [T],
    ci_g: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    ho: usize,
    wo: usize,
    stride: usize,
    pad: usize,
) {
    let area = ho * wo;
    for c in 0..ci_g {
        for ki in 0..kh {
            for kj in 0..kw {
                let row = ((c * kh + ki) * kw + kj) * area;
                for oy in 0..ho {
                    let iy = (oy * stride + ki) as isize - pad as isize;
                    let dst = row + oy * wo;
                    if iy < 0 || iy >= h as isize {
                        col[dst..dst + wo].iter_mut().for_each(|v| *v = T::zero());
                        continue;
                    }
                    let src_row = (c * h + iy as usize) * w;
                    for ox in 0..wo {
                        let ix = (ox * stride + kj) as isize - pad as isize;
                        col[dst + ox] = if ix < 0 || ix >= w as isize {
                            T::zero()
                        } else {
                            x[src_row + ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Transpose of [`im2col`]: scatter-adds patch columns back into the image.
#[allow(clippy::too_many_arguments)]
fn col2im<T: Elem>(
    col: &[T],
    x: &mut [T],
    ci_g: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    ho: usize,
    wo: usize,
    stride: usize,
    pad: usize,
) {
    let area = ho * wo;
    for c in 0..ci_g {
        for ki in 0..kh {
            for kj in 0..kw {
                let row = ((c * kh + ki) * kw + kj) * area;
                for oy in 0..ho {
                    let iy = (oy * stride + ki) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src = row + oy * wo;
                    let dst_row = (c * h + iy as usize) * w;
                    for ox in 0..wo {
                        let ix = (ox * stride + kj) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            let d = dst_row + ix as usize;
                            x[d] = x[d] + col[src + ox];
                        }
                    }
                }
            }
        }
    }
}

impl<T: Elem> Tensor<T> {
    /// 2D convolution: `self` NCHW, `weight` OIHW, optional per-channel bias.
    ///
    /// Output spatial dims are `floor((d + 2*pad - k)/stride) + 1`.
    pub fn conv2d(
        &self,
        weight: &Tensor<T>,
        bias: Option<&Tensor<T>>,
        stride: usize,
        pad: usize,
        groups: usize,
    ) -> Result<Tensor<T>> {
        let d = conv_dims(self, weight, stride, pad, groups)?;
        if let Some(b) = bias {
            if b.shape() != [d.c_out] {
                return Err(Error::shape(
                    "conv2d",
                    format!("bias shape {:?}, expected [{}]", b.shape(), d.c_out),
                ));
            }
        }
        let (ci_g, co_g) = (d.c_in / d.groups, d.c_out / d.groups);
        let area = d.ho * d.wo;
        let patch = ci_g * d.kh * d.kw;
        let mut out = vec![T::zero(); d.n * d.c_out * area];
        {
            let x = self.inner.data.borrow();
            let wgt = weight.inner.data.borrow();
            let mut col = vec![T::zero(); patch * area];
            for ni in 0..d.n {
                for g in 0..d.groups {
                    let x_off = (ni * d.c_in + g * ci_g) * d.h * d.w;
                    im2col(
                        &x[x_off..x_off + ci_g * d.h * d.w],
                        &mut col,
                        ci_g,
                        d.h,
                        d.w,
                        d.kh,
                        d.kw,
                        d.ho,
                        d.wo,
                        stride,
                        pad,
                    );
                    let w_off = g * co_g * patch;
                    let o_off = (ni * d.c_out + g * co_g) * area;
                    mm(
                        &wgt[w_off..w_off + co_g * patch],
                        &col,
                        &mut out[o_off..o_off + co_g * area],
                        co_g,
                        patch,
                        area,
                    );
                }
            }
            if let Some(b) = bias {
                let bd = b.inner.data.borrow();
                for ni in 0..d.n {
                    for c in 0..d.c_out {
                        let base = (ni * d.c_out + c) * area;
                        for i in 0..area {
                            out[base + i] = out[base + i] + bd[c];
                        }
                    }
                }
            }
        }
        macs::add((d.n * d.c_out * patch * area) as u64);
        let out_t = Tensor::from_vec(&[d.n, d.c_out, d.ho, d.wo], out)?;

        let x_t = self.clone();
        let w_t = weight.clone();
        let inputs: Vec<&Tensor<T>> = match bias {
            Some(b) => vec![self, weight, b],
            None => vec![self, weight],
        };
        record(&inputs, &out_t, move |ids| {
            Box::new(move |g, sink| {
                let x = x_t.inner.data.borrow();
                let wgt = w_t.inner.data.borrow();
                let mut col = vec![T::zero(); patch * area];
                // d/dbias: sum over batch and spatial positions
                if let Some(&Some(bid)) = ids.get(2) {
                    sink.with(bid, |gb| {
                        for ni in 0..d.n {
                            for c in 0..d.c_out {
                                let base = (ni * d.c_out + c) * area;
                                let mut s = T::zero();
                                for i in 0..area {
                                    s = s + g[base + i];
                                }
                                gb[c] = gb[c] + s;
                            }
                        }
                    });
                }
                // d/dweight = dY . col^T, per image and group
                if let Some(wid) = ids[1] {
                    sink.with(wid, |gw| {
                        for ni in 0..d.n {
                            for gi in 0..d.groups {
                                let x_off = (ni * d.c_in + gi * ci_g) * d.h * d.w;
                                im2col(
                                    &x[x_off..x_off + ci_g * d.h * d.w],
                                    &mut col,
                                    ci_g,
                                    d.h,
                                    d.w,
                                    d.kh,
                                    d.kw,
                                    d.ho,
                                    d.wo,
                                    stride,
                                    pad,
                                );
                                let o_off = (ni * d.c_out + gi * co_g) * area;
                                let w_off = gi * co_g * patch;
                                // gw[o, p] += sum_j g[o, j] * col[p, j]
                                for o in 0..co_g {
                                    let gr = &g[o_off + o * area..o_off + (o + 1) * area];
                                    let wrow = &mut gw[w_off + o * patch..w_off + (o + 1) * patch];
                                    for p in 0..patch {
                                        let cr = &col[p * area..(p + 1) * area];
                                        let mut s = T::zero();
                                        for j in 0..area {
                                            s = s + gr[j] * cr[j];
                                        }
                                        wrow[p] = wrow[p] + s;
                                    }
                                }
                            }
                        }
                    });
                }
                // d/dx = col2im(W^T . dY)
                if let Some(xid) = ids[0] {
                    sink.with(xid, |gx| {
                        for ni in 0..d.n {
                            for gi in 0..d.groups {
                                col.iter_mut().for_each(|v| *v = T::zero());
                                let o_off = (ni * d.c_out + gi * co_g) * area;
                                let w_off = gi * co_g * patch;
                                // col[p, j] = sum_o wgt[o, p] * g[o, j]
                                for o in 0..co_g {
                                    let gr = &g[o_off + o * area..o_off + (o + 1) * area];
                                    let wrow = &wgt[w_off + o * patch..w_off + (o + 1) * patch];
                                    for p in 0..patch {
                                        let aip = wrow[p];
                                        if aip == T::zero() {
                                            continue;
                                        }
                                        let cr = &mut col[p * area..(p + 1) * area];
                                        for j in 0..area {
                                            cr[j] = cr[j] + aip * gr[j];
                                        }
                                    }
                                }
                                let x_off = (ni * d.c_in + gi * ci_g) * d.h * d.w;
                                col2im(
                                    &col,
                                    &mut gx[x_off..x_off + ci_g * d.h * d.w],
                                    ci_g,
                                    d.h,
                                    d.w,
                                    d.kh,
                                    d.kw,
                                    d.ho,
                                    d.wo,
                                    stride,
                                    pad,
                                );
                            }
                        }
                    });
                }
            })
        })?;
        Ok(out_t)
    }

    /// Max pooling; ties select the lowest linear input index.
    pub fn max_pool2d(&self, k: usize, stride: usize, pad: usize) -> Result<Tensor<T>> {
        let xs = self.shape();
        if xs.len() != 4 {
            return Err(Error::shape("max_pool2d", format!("expected NCHW, got {xs:?}")));
        }
        let (n, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        if h + 2 * pad < k || w + 2 * pad < k {
            return Err(Error::shape("max_pool2d", "window larger than padded input"));
        }
        let ho = (h + 2 * pad - k) / stride + 1;
        let wo = (w + 2 * pad - k) / stride + 1;
        let mut out = vec![T::zero(); n * c * ho * wo];
        let mut argmax = vec![0usize; n * c * ho * wo];
        {
            let x = self.inner.data.borrow();
            for nc in 0..n * c {
                let base_in = nc * h * w;
                let base_out = nc * ho * wo;
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut best = T::neg_infinity();
                        let mut best_i = usize::MAX;
                        for ki in 0..k {
                            let iy = (oy * stride + ki) as isize - pad as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kj in 0..k {
                                let ix = (ox * stride + kj) as isize - pad as isize;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                let idx = base_in + iy as usize * w + ix as usize;
                                if x[idx] > best {
                                    best = x[idx];
                                    best_i = idx;
                                }
                            }
                        }
                        out[base_out + oy * wo + ox] = best;
                        argmax[base_out + oy * wo + ox] = best_i;
                    }
                }
            }
        }
        let out_t = Tensor::from_vec(&[n, c, ho, wo], out)?;
        record(&[self], &out_t, move |ids| {
            Box::new(move |g, sink| {
                if let Some(id) = ids[0] {
                    sink.with(id, |gx| {
                        for (i, &src) in argmax.iter().enumerate() {
                            gx[src] = gx[src] + g[i];
                        }
                    });
                }
            })
        })?;
        Ok(out_t)
    }

    /// Nearest-neighbour upsampling by an integer factor.
    pub fn upsample_nearest2d(&self, factor: usize) -> Result<Tensor<T>> {
        let xs = self.shape();
        if xs.len() != 4 {
            return Err(Error::shape("upsample_nearest2d", format!("expected NCHW, got {xs:?}")));
        }
        if factor == 0 {
            return Err(Error::shape("upsample_nearest2d", "factor must be positive"));
        }
        let (n, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        let (ho, wo) = (h * factor, w * factor);
        let mut out = vec![T::zero(); n * c * ho * wo];
        {
            let x = self.inner.data.borrow();
            for nc in 0..n * c {
                for oy in 0..ho {
                    let src_row = (nc * h + oy / factor) * w;
                    let dst_row = (nc * ho + oy) * wo;
                    for ox in 0..wo {
                        out[dst_row + ox] = x[src_row + ox / factor];
                    }
                }
            }
        }
        let out_t = Tensor::from_vec(&[n, c, ho, wo], out)?;
        record(&[self], &out_t, move |ids| {
            Box::new(move |g, sink| {
                if let Some(id) = ids[0] {
                    sink.with(id, |gx| {
                        for nc in 0..n * c {
                            for oy in 0..ho {
                                let src_row = (nc * h + oy / factor) * w;
                                let dst_row = (nc * ho + oy) * wo;
                                for ox in 0..wo {
                                    gx[src_row + ox / factor] =
                                        gx[src_row + ox / factor] + g[dst_row + ox];
                                }
                            }
                        }
                    });
                }
            })
        })?;
        Ok(out_t)
    }

    /// Batch normalization over NCHW.
    ///
    /// Training mode normalizes by batch statistics and updates the running
    /// buffers in place (momentum `momentum`, unbiased variance); eval mode
    /// normalizes by the running buffers. Differentiable w.r.t. the input,
    /// `gamma` and `beta`.
    #[allow(clippy::too_many_arguments)]
    pub fn batch_norm(
        &self,
        gamma: &Tensor<T>,
        beta: &Tensor<T>,
        running_mean: &Tensor<T>,
        running_var: &Tensor<T>,
        eps: f64,
        momentum: f64,
        training: bool,
    ) -> Result<Tensor<T>> {
        let xs = self.shape();
        if xs.len() != 4 {
            return Err(Error::shape("batch_norm", format!("expected NCHW, got {xs:?}")));
        }
        let ch = xs[1];
        for (name, t) in [
            ("gamma", gamma),
            ("beta", beta),
            ("running_mean", running_mean),
            ("running_var", running_var),
        ] {
            if t.numel() != ch {
                return Err(Error::shape(
                    "batch_norm",
                    format!("{name} has {} elements, expected {ch} channels", t.numel()),
                ));
            }
        }
        let cshape = [1, ch, 1, 1];
        let g4 = gamma.reshape(&cshape)?;
        let b4 = beta.reshape(&cshape)?;
        if training {
            let mean = self.mean_axes(&[0, 2, 3])?;
            let centered = self.sub(&mean)?;
            let var = centered.square()?.mean_axes(&[0, 2, 3])?;
            // side effect: running-stat update with detached batch stats
            let count = (xs[0] * xs[2] * xs[3]) as f64;
            let bessel = if count > 1.0 { count / (count - 1.0) } else { 1.0 };
            let m = super::c::<T>(momentum);
            let one_m = T::one() - m;
            mean.with_data(|mv| {
                running_mean.update_data(|rm| {
                    for (r, &b) in rm.iter_mut().zip(mv) {
                        *r = one_m * *r + m * b;
                    }
                });
            });
            var.with_data(|vv| {
                running_var.update_data(|rv| {
                    for (r, &b) in rv.iter_mut().zip(vv) {
                        *r = one_m * *r + m * b * super::c::<T>(bessel);
                    }
                });
            });
            let denom = var.add_scalar(eps)?.sqrt()?;
            centered.div(&denom)?.mul(&g4)?.add(&b4)
        } else {
            let rm = running_mean.detach().reshape(&cshape)?;
            let rv = running_var.detach().reshape(&cshape)?;
            let denom = rv.add_scalar(eps)?.sqrt()?;
            self.sub(&rm)?.div(&denom)?.mul(&g4)?.add(&b4)
        }
    }
}
