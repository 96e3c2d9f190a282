//! Detection-specific primitives: stable BCE on logits, positive-cell gather.

use super::ops::record;
use super::{Elem, Tensor};
use crate::{Error, Result};

impl<T: Elem> Tensor<T> {
    /// Elementwise binary cross-entropy on logits against constant targets.
    ///
    /// Computed as `max(x,0) - x*t + ln(1 + exp(-|x|))`; the gradient w.r.t.
    /// the logits is `sigmoid(x) - t`.
    pub fn bce_with_logits(&self, target: &Tensor<T>) -> Result<Tensor<T>> {
        if self.shape() != target.shape() {
            return Err(Error::shape(
                "bce_with_logits",
                format!("logits {:?} vs targets {:?}", self.shape(), target.shape()),
            ));
        }
        let data: Vec<T> = {
            let x = self.inner.data.borrow();
            let t = target.inner.data.borrow();
            x.iter()
                .zip(t.iter())
                .map(|(&x, &t)| {
                    let pos = if x > T::zero() { x } else { T::zero() };
                    pos - x * t + (T::one() + (-x.abs()).exp()).ln()
                })
                .collect()
        };
        let out = Tensor::from_vec(self.shape(), data)?;
        let x_t = self.clone();
        let t_t = target.detach();
        record(&[self], &out, move |ids| {
            Box::new(move |g, sink| {
                let x = x_t.inner.data.borrow();
                let t = t_t.inner.data.borrow();
                if let Some(id) = ids[0] {
                    sink.with(id, |gx| {
                        for i in 0..gx.len() {
                            let s = if x[i] >= T::zero() {
                                T::one() / (T::one() + (-x[i]).exp())
                            } else {
                                let e = x[i].exp();
                                e / (T::one() + e)
                            };
                            gx[i] = gx[i] + g[i] * (s - t[i]);
                        }
                    });
                }
            })
        })?;
        Ok(out)
    }

    /// Gathers rows `out[p, :] = self[n, a, :, y, x]` from a (N, A, C, H, W)
    /// tensor for each `(n, a, y, x)` in `cells`. Backward scatter-adds.
    pub fn gather_cells(&self, cells: &[(usize, usize, usize, usize)]) -> Result<Tensor<T>> {
        let s = self.shape();
        if s.len() != 5 {
            return Err(Error::shape(
                "gather_cells",
                format!("expected rank-5 (N,A,C,H,W), got {s:?}"),
            ));
        }
        let (n, a, ch, h, w) = (s[0], s[1], s[2], s[3], s[4]);
        for &(ni, ai, yi, xi) in cells {
            if ni >= n || ai >= a || yi >= h || xi >= w {
                return Err(Error::shape(
                    "gather_cells",
                    format!("cell ({ni},{ai},{yi},{xi}) outside (N={n},A={a},H={h},W={w})"),
                ));
            }
        }
        let p = cells.len();
        let mut out = vec![T::zero(); p * ch];
        let offsets: Vec<usize> = cells
            .iter()
            .map(|&(ni, ai, yi, xi)| (((ni * a) + ai) * ch * h * w) + yi * w + xi)
            .collect();
        {
            let x = self.inner.data.borrow();
            for (pi, &base) in offsets.iter().enumerate() {
                for c in 0..ch {
                    out[pi * ch + c] = x[base + c * h * w];
                }
            }
        }
        let out_t = Tensor::from_vec(&[p, ch], out)?;
        let plane = h * w;
        record(&[self], &out_t, move |ids| {
            Box::new(move |g, sink| {
                if let Some(id) = ids[0] {
                    sink.with(id, |gx| {
                        for (pi, &base) in offsets.iter().enumerate() {
                            for c in 0..ch {
                                gx[base + c * plane] = gx[base + c * plane] + g[pi * ch + c];
                            }
                        }
                    });
                }
            })
        })?;
        Ok(out_t)
    }
}
