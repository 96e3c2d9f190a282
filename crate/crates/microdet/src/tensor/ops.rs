//! Elementwise, reduction, shape and linear-algebra primitives.
//!
//! Every op is broadcast-aware where it makes sense, returns a fresh tensor,
//! and records a backward rule when an input sits on a live tape.

use super::tape::BackFn;
use super::{
    broadcast, for_each_broadcast2, macs, numel, recording_of, strides, Elem, Tensor,
};
use crate::{Error, Result};

/// Records `out` on the inputs' tape (if any input is tracked).
pub(crate) fn record<T: Elem>(
    inputs: &[&Tensor<T>],
    out: &Tensor<T>,
    make_back: impl FnOnce(Vec<Option<usize>>) -> BackFn<T>,
) -> Result<()> {
    if let Some((tape, ids)) = recording_of(inputs)? {
        if ids.iter().any(Option::is_some) {
            let id = tape.push_op(out.numel(), make_back(ids));
            out.attach(&tape.inner, id);
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Broadcast binary ops
// ---------------------------------------------------------------------------

macro_rules! binary_broadcast {
    ($name:ident, $op_str:literal, $fwd:expr, $bwd_a:expr, $bwd_b:expr) => {
        pub fn $name(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
            let out_shape = broadcast($op_str, self.shape(), other.shape())?;
            let mut out = vec![T::zero(); numel(&out_shape)];
            {
                let a = self.inner.data.borrow();
                let b = other.inner.data.borrow();
                if self.shape() == other.shape() {
                    for i in 0..out.len() {
                        out[i] = $fwd(a[i], b[i]);
                    }
                } else {
                    for_each_broadcast2(&out_shape, self.shape(), other.shape(), |io, ia, ib| {
                        out[io] = $fwd(a[ia], b[ib]);
                    });
                }
            }
            let out = Tensor::from_vec(&out_shape, out)?;
            let (a_t, b_t) = (self.clone(), other.clone());
            let osh = out_shape;
            record(&[self, other], &out, move |ids| {
                Box::new(move |g, sink| {
                    let a = a_t.inner.data.borrow();
                    let b = b_t.inner.data.borrow();
                    if let Some(ia_id) = ids[0] {
                        sink.with(ia_id, |ga| {
                            for_each_broadcast2(&osh, a_t.shape(), b_t.shape(), |io, ia, ib| {
                                ga[ia] = ga[ia] + $bwd_a(g[io], a[ia], b[ib]);
                            });
                        });
                    }
                    if let Some(ib_id) = ids[1] {
                        sink.with(ib_id, |gb| {
                            for_each_broadcast2(&osh, a_t.shape(), b_t.shape(), |io, ia, ib| {
                                gb[ib] = gb[ib] + $bwd_b(g[io], a[ia], b[ib]);
                            });
                        });
                    }
                })
            })?;
            Ok(out)
        }
    };
}

impl<T: Elem> Tensor<T> {
    binary_broadcast!(add, "add", |a, b| a + b, |g, _a, _b| g, |g, _a, _b| g);
    binary_broadcast!(
        sub,
        "sub",
        |a, b| a - b,
        |g: T, _a, _b| g,
        |g: T, _a: T, _b: T| -g
    );
    binary_broadcast!(
        mul,
        "mul",
        |a, b| a * b,
        |g: T, _a: T, b: T| g * b,
        |g: T, a: T, _b: T| g * a
    );
    binary_broadcast!(
        div,
        "div",
        |a, b| a / b,
        |g: T, _a: T, b: T| g / b,
        |g: T, a: T, b: T| -g * a / (b * b)
    );
    // Ties route the gradient to the first operand.
    binary_broadcast!(
        min_elem,
        "min_elem",
        |a: T, b: T| if a <= b { a } else { b },
        |g: T, a: T, b: T| if a <= b { g } else { T::zero() },
        |g: T, a: T, b: T| if a <= b { T::zero() } else { g }
    );
    binary_broadcast!(
        max_elem,
        "max_elem",
        |a: T, b: T| if a >= b { a } else { b },
        |g: T, a: T, b: T| if a >= b { g } else { T::zero() },
        |g: T, a: T, b: T| if a >= b { T::zero() } else { g }
    );
}

// ---------------------------------------------------------------------------
// Unary ops
// ---------------------------------------------------------------------------

fn sigmoid_scalar<T: Elem>(x: T) -> T {
    let one = T::one();
    if x >= T::zero() {
        one / (one + (-x).exp())
    } else {
        let e = x.exp();
        e / (one + e)
    }
}

macro_rules! unary_op {
    ($name:ident, $fwd:expr, $bwd:expr) => {
        pub fn $name(&self) -> Result<Tensor<T>> {
            let data: Vec<T> = self.inner.data.borrow().iter().map(|&x| $fwd(x)).collect();
            let out = Tensor::from_vec(self.shape(), data)?;
            let x_t = self.clone();
            let y_t = out.clone();
            record(&[self], &out, move |ids| {
                Box::new(move |g, sink| {
                    let x = x_t.inner.data.borrow();
                    let y = y_t.inner.data.borrow();
                    if let Some(id) = ids[0] {
                        sink.with(id, |gx| {
                            for i in 0..gx.len() {
                                gx[i] = gx[i] + $bwd(g[i], x[i], y[i]);
                            }
                        });
                    }
                })
            })?;
            Ok(out)
        }
    };
}

impl<T: Elem> Tensor<T> {
    unary_op!(exp, |x: T| x.exp(), |g: T, _x: T, y: T| g * y);
    unary_op!(atan, |x: T| x.atan(), |g: T, x: T, _y: T| g
        / (T::one() + x * x));
    unary_op!(sigmoid, sigmoid_scalar, |g: T, _x: T, y: T| g
        * y
        * (T::one() - y));
    unary_op!(
        relu,
        |x: T| if x > T::zero() { x } else { T::zero() },
        |g: T, x: T, _y: T| if x > T::zero() { g } else { T::zero() }
    );
    unary_op!(
        silu,
        |x: T| x * sigmoid_scalar(x),
        |g: T, x: T, _y: T| {
            let s = sigmoid_scalar(x);
            g * s * (T::one() + x * (T::one() - s))
        }
    );
    // Subgradient 0 at the origin, with a floor inside the reciprocal so the
    // backward pass stays finite when the argument underflows.
    unary_op!(
        sqrt,
        |x: T| x.sqrt(),
        |g: T, x: T, y: T| {
            if x > super::c(1e-12) {
                g / (y + y)
            } else {
                T::zero()
            }
        }
    );

    pub fn square(&self) -> Result<Tensor<T>> {
        self.mul(self)
    }

    pub fn neg(&self) -> Result<Tensor<T>> {
        self.mul_scalar(-1.0)
    }

    pub fn add_scalar(&self, v: f64) -> Result<Tensor<T>> {
        let k: T = super::c(v);
        let data: Vec<T> = self.inner.data.borrow().iter().map(|&x| x + k).collect();
        let out = Tensor::from_vec(self.shape(), data)?;
        record(&[self], &out, move |ids| {
            Box::new(move |g, sink| {
                if let Some(id) = ids[0] {
                    sink.accum(id, g);
                }
            })
        })?;
        Ok(out)
    }

    pub fn mul_scalar(&self, v: f64) -> Result<Tensor<T>> {
        let k: T = super::c(v);
        let data: Vec<T> = self.inner.data.borrow().iter().map(|&x| x * k).collect();
        let out = Tensor::from_vec(self.shape(), data)?;
        record(&[self], &out, move |ids| {
            Box::new(move |g, sink| {
                if let Some(id) = ids[0] {
                    sink.with(id, |gx| {
                        for i in 0..gx.len() {
                            gx[i] = gx[i] + g[i] * k;
                        }
                    });
                }
            })
        })?;
        Ok(out)
    }

    /// Clamp to [lo, hi]; gradient passes inside the closed interval.
    pub fn clamp(&self, lo: f64, hi: f64) -> Result<Tensor<T>> {
        let (lo_t, hi_t): (T, T) = (super::c(lo), super::c(hi));
        let data: Vec<T> = self
            .inner
            .data
            .borrow()
            .iter()
            .map(|&x| {
                if x < lo_t {
                    lo_t
                } else if x > hi_t {
                    hi_t
                } else {
                    x
                }
            })
            .collect();
        let out = Tensor::from_vec(self.shape(), data)?;
        let x_t = self.clone();
        record(&[self], &out, move |ids| {
            Box::new(move |g, sink| {
                let x = x_t.inner.data.borrow();
                if let Some(id) = ids[0] {
                    sink.with(id, |gx| {
                        for i in 0..gx.len() {
                            if x[i] >= lo_t && x[i] <= hi_t {
                                gx[i] = gx[i] + g[i];
                            }
                        }
                    });
                }
            })
        })?;
        Ok(out)
    }
}

/// Elementwise activation selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActKind {
    Silu,
    Sigmoid,
    Relu,
}

impl std::str::FromStr for ActKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "silu" => Ok(ActKind::Silu),
            "sigmoid" => Ok(ActKind::Sigmoid),
            "relu" => Ok(ActKind::Relu),
            other => Err(Error::Config(format!("unknown activation `{other}`"))),
        }
    }
}

impl<T: Elem> Tensor<T> {
    pub fn activation(&self, kind: ActKind) -> Result<Tensor<T>> {
        match kind {
            ActKind::Silu => self.silu(),
            ActKind::Sigmoid => self.sigmoid(),
            ActKind::Relu => self.relu(),
        }
    }
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

impl<T: Elem> Tensor<T> {
    fn reduce_axes(&self, op: &'static str, axes: &[usize], mean: bool) -> Result<Tensor<T>> {
        let rank = self.rank();
        for &a in axes {
            if a >= rank {
                return Err(Error::Axis { op, axis: a, rank });
            }
        }
        let mut out_shape = self.shape().to_vec();
        let mut count = 1usize;
        for &a in axes {
            count *= out_shape[a];
            out_shape[a] = 1;
        }
        let scale: T = if mean {
            T::one() / super::c(count as f64)
        } else {
            T::one()
        };
        let mut out = vec![T::zero(); numel(&out_shape)];
        {
            let x = self.inner.data.borrow();
            for_each_broadcast2(self.shape(), &out_shape, &[], |ii, io, _| {
                out[io] = out[io] + x[ii];
            });
            for v in &mut out {
                *v = *v * scale;
            }
        }
        let out_t = Tensor::from_vec(&out_shape, out)?;
        let in_shape = self.shape().to_vec();
        let osh = out_shape;
        record(&[self], &out_t, move |ids| {
            Box::new(move |g, sink| {
                if let Some(id) = ids[0] {
                    sink.with(id, |gx| {
                        for_each_broadcast2(&in_shape, &osh, &[], |ii, io, _| {
                            gx[ii] = gx[ii] + g[io] * scale;
                        });
                    });
                }
            })
        })?;
        Ok(out_t)
    }

    /// Sum over `axes`, keeping them as size-1 dims.
    pub fn sum_axes(&self, axes: &[usize]) -> Result<Tensor<T>> {
        self.reduce_axes("sum_axes", axes, false)
    }

    /// Mean over `axes`, keeping them as size-1 dims.
    pub fn mean_axes(&self, axes: &[usize]) -> Result<Tensor<T>> {
        self.reduce_axes("mean_axes", axes, true)
    }

    pub fn sum_all(&self) -> Result<Tensor<T>> {
        let all: Vec<usize> = (0..self.rank()).collect();
        self.sum_axes(&all)?.reshape(&[1])
    }

    pub fn mean_all(&self) -> Result<Tensor<T>> {
        let all: Vec<usize> = (0..self.rank()).collect();
        self.mean_axes(&all)?.reshape(&[1])
    }
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

impl<T: Elem> Tensor<T> {
    pub fn reshape(&self, new_shape: &[usize]) -> Result<Tensor<T>> {
        if numel(new_shape) != self.numel() {
            return Err(Error::shape(
                "reshape",
                format!("{:?} -> {:?} changes element count", self.shape(), new_shape),
            ));
        }
        let out = Tensor::from_vec(new_shape, self.to_vec())?;
        record(&[self], &out, move |ids| {
            Box::new(move |g, sink| {
                if let Some(id) = ids[0] {
                    sink.accum(id, g);
                }
            })
        })?;
        Ok(out)
    }

    pub fn permute(&self, perm: &[usize]) -> Result<Tensor<T>> {
        let rank = self.rank();
        let mut seen = vec![false; rank];
        if perm.len() != rank || perm.iter().any(|&p| p >= rank || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::shape(
                "permute",
                format!("{perm:?} is not a permutation of 0..{rank}"),
            ));
        }
        let in_shape = self.shape().to_vec();
        let out_shape: Vec<usize> = perm.iter().map(|&p| in_shape[p]).collect();
        let in_strides = strides(&in_shape);
        let n = self.numel();
        let mut out = vec![T::zero(); n];
        // out index -> in index mapping, reused (inverted) by backward
        let mut mapping = vec![0usize; n];
        {
            let x = self.inner.data.borrow();
            let mut coords = vec![0usize; rank];
            for io in 0..n {
                let mut ii = 0;
                for d in 0..rank {
                    ii += coords[d] * in_strides[perm[d]];
                }
                out[io] = x[ii];
                mapping[io] = ii;
                for d in (0..rank).rev() {
                    coords[d] += 1;
                    if coords[d] < out_shape[d] {
                        break;
                    }
                    coords[d] = 0;
                }
            }
        }
        let out_t = Tensor::from_vec(&out_shape, out)?;
        record(&[self], &out_t, move |ids| {
            Box::new(move |g, sink| {
                if let Some(id) = ids[0] {
                    sink.with(id, |gx| {
                        for (io, &ii) in mapping.iter().enumerate() {
                            gx[ii] = gx[ii] + g[io];
                        }
                    });
                }
            })
        })?;
        Ok(out_t)
    }

    /// Concatenates tensors along `axis`.
    pub fn concat(axis: usize, parts: &[&Tensor<T>]) -> Result<Tensor<T>> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("concat", "no inputs"))?;
        let rank = first.rank();
        if axis >= rank {
            return Err(Error::Axis {
                op: "concat",
                axis,
                rank,
            });
        }
        let mut axis_total = 0usize;
        for p in parts {
            if p.rank() != rank {
                return Err(Error::shape("concat", "rank mismatch"));
            }
            for d in 0..rank {
                if d != axis && p.shape()[d] != first.shape()[d] {
                    return Err(Error::shape(
                        "concat",
                        format!(
                            "dim {d}: {} vs {} (only axis {axis} may differ)",
                            p.shape()[d],
                            first.shape()[d]
                        ),
                    ));
                }
            }
            axis_total += p.shape()[axis];
        }
        let mut out_shape = first.shape().to_vec();
        out_shape[axis] = axis_total;
        let outer: usize = out_shape[..axis].iter().product();
        let inner: usize = out_shape[axis + 1..].iter().product();
        let mut out = vec![T::zero(); numel(&out_shape)];
        let mut offset = 0usize;
        let mut spans = Vec::with_capacity(parts.len());
        for p in parts {
            let len = p.shape()[axis];
            let x = p.inner.data.borrow();
            for o in 0..outer {
                let dst = (o * axis_total + offset) * inner;
                let src = o * len * inner;
                out[dst..dst + len * inner].copy_from_slice(&x[src..src + len * inner]);
            }
            spans.push((offset, len));
            offset += len;
        }
        let out_t = Tensor::from_vec(&out_shape, out)?;
        record(parts, &out_t, move |ids| {
            Box::new(move |g, sink| {
                for (pi, id) in ids.iter().enumerate() {
                    let Some(id) = id else { continue };
                    let (off, len) = spans[pi];
                    sink.with(*id, |gx| {
                        for o in 0..outer {
                            let src = (o * axis_total + off) * inner;
                            let dst = o * len * inner;
                            for i in 0..len * inner {
                                gx[dst + i] = gx[dst + i] + g[src + i];
                            }
                        }
                    });
                }
            })
        })?;
        Ok(out_t)
    }

    /// Splits along `axis` into chunks of the given sizes.
    pub fn split(&self, axis: usize, sizes: &[usize]) -> Result<Vec<Tensor<T>>> {
        let rank = self.rank();
        if axis >= rank {
            return Err(Error::Axis {
                op: "split",
                axis,
                rank,
            });
        }
        let total: usize = sizes.iter().sum();
        if total != self.shape()[axis] {
            return Err(Error::shape(
                "split",
                format!("sizes {sizes:?} sum to {total}, axis {axis} has {}", self.shape()[axis]),
            ));
        }
        let outer: usize = self.shape()[..axis].iter().product();
        let inner: usize = self.shape()[axis + 1..].iter().product();
        let axis_len = self.shape()[axis];
        let mut outs = Vec::with_capacity(sizes.len());
        let mut offset = 0usize;
        for &len in sizes {
            let mut shape = self.shape().to_vec();
            shape[axis] = len;
            let mut buf = vec![T::zero(); outer * len * inner];
            {
                let x = self.inner.data.borrow();
                for o in 0..outer {
                    let src = (o * axis_len + offset) * inner;
                    let dst = o * len * inner;
                    buf[dst..dst + len * inner].copy_from_slice(&x[src..src + len * inner]);
                }
            }
            let part = Tensor::from_vec(&shape, buf)?;
            let off = offset;
            record(&[self], &part, move |ids| {
                Box::new(move |g, sink| {
                    if let Some(id) = ids[0] {
                        sink.with(id, |gx| {
                            for o in 0..outer {
                                let dst = (o * axis_len + off) * inner;
                                let src = o * len * inner;
                                for i in 0..len * inner {
                                    gx[dst + i] = gx[dst + i] + g[src + i];
                                }
                            }
                        });
                    }
                })
            })?;
            outs.push(part);
            offset += len;
        }
        Ok(outs)
    }
}

// ---------------------------------------------------------------------------
// Softmax and matmul
// ---------------------------------------------------------------------------

impl<T: Elem> Tensor<T> {
    /// Softmax along `axis`; rows sum to 1.
    pub fn softmax(&self, axis: usize) -> Result<Tensor<T>> {
        let rank = self.rank();
        if axis >= rank {
            return Err(Error::Axis {
                op: "softmax",
                axis,
                rank,
            });
        }
        let lane = self.shape()[axis];
        let inner: usize = self.shape()[axis + 1..].iter().product();
        let outer: usize = self.shape()[..axis].iter().product();
        let mut out = self.to_vec();
        for o in 0..outer {
            for i in 0..inner {
                let base = o * lane * inner + i;
                let mut max = out[base];
                for l in 1..lane {
                    let v = out[base + l * inner];
                    if v > max {
                        max = v;
                    }
                }
                let mut sum = T::zero();
                for l in 0..lane {
                    let e = (out[base + l * inner] - max).exp();
                    out[base + l * inner] = e;
                    sum = sum + e;
                }
                for l in 0..lane {
                    out[base + l * inner] = out[base + l * inner] / sum;
                }
            }
        }
        let out_t = Tensor::from_vec(self.shape(), out)?;
        let y_t = out_t.clone();
        record(&[self], &out_t, move |ids| {
            Box::new(move |g, sink| {
                let y = y_t.inner.data.borrow();
                if let Some(id) = ids[0] {
                    sink.with(id, |gx| {
                        for o in 0..outer {
                            for i in 0..inner {
                                let base = o * lane * inner + i;
                                let mut dot = T::zero();
                                for l in 0..lane {
                                    let k = base + l * inner;
                                    dot = dot + g[k] * y[k];
                                }
                                for l in 0..lane {
                                    let k = base + l * inner;
                                    gx[k] = gx[k] + y[k] * (g[k] - dot);
                                }
                            }
                        }
                    });
                }
            })
        })?;
        Ok(out_t)
    }

    /// Matrix product. Accepts (m,k)x(k,n) or batched (b,m,k)x(b,k,n).
    pub fn matmul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        let (a_sh, b_sh) = (self.shape(), other.shape());
        match (a_sh.len(), b_sh.len()) {
            (2, 2) => {
                let (m, k) = (a_sh[0], a_sh[1]);
                let (k2, n) = (b_sh[0], b_sh[1]);
                if k != k2 {
                    return Err(Error::shape(
                        "matmul",
                        format!("inner dims differ: {a_sh:?} x {b_sh:?}"),
                    ));
                }
                self.matmul_batched(other, 1, m, k, n, &[m, n])
            }
            (3, 3) => {
                let (ba, m, k) = (a_sh[0], a_sh[1], a_sh[2]);
                let (bb, k2, n) = (b_sh[0], b_sh[1], b_sh[2]);
                if ba != bb || k != k2 {
                    return Err(Error::shape(
                        "matmul",
                        format!("incompatible batched shapes: {a_sh:?} x {b_sh:?}"),
                    ));
                }
                self.matmul_batched(other, ba, m, k, n, &[ba, m, n])
            }
            _ => Err(Error::shape(
                "matmul",
                format!("expected rank 2 or 3 pairs, got {a_sh:?} x {b_sh:?}"),
            )),
        }
    }

    fn matmul_batched(
        &self,
        other: &Tensor<T>,
        batch: usize,
        m: usize,
        k: usize,
        n: usize,
        out_shape: &[usize],
    ) -> Result<Tensor<T>> {
        let mut out = vec![T::zero(); batch * m * n];
        {
            let a = self.inner.data.borrow();
            let b = other.inner.data.borrow();
            for bi in 0..batch {
                mm(
                    &a[bi * m * k..(bi + 1) * m * k],
                    &b[bi * k * n..(bi + 1) * k * n],
                    &mut out[bi * m * n..(bi + 1) * m * n],
                    m,
                    k,
                    n,
                );
            }
        }
        macs::add((batch * m * k * n) as u64);
        let out_t = Tensor::from_vec(out_shape, out)?;
        let (a_t, b_t) = (self.clone(), other.clone());
        record(&[self, other], &out_t, move |ids| {
            Box::new(move |g, sink| {
                let a = a_t.inner.data.borrow();
                let b = b_t.inner.data.borrow();
                // dA = dY . B^T ; dB = A^T . dY
                if let Some(id) = ids[0] {
                    sink.with(id, |ga| {
                        for bi in 0..batch {
                            mm_nt(
                                &g[bi * m * n..(bi + 1) * m * n],
                                &b[bi * k * n..(bi + 1) * k * n],
                                &mut ga[bi * m * k..(bi + 1) * m * k],
                                m,
                                n,
                                k,
                            );
                        }
                    });
                }
                if let Some(id) = ids[1] {
                    sink.with(id, |gb| {
                        for bi in 0..batch {
                            mm_tn(
                                &a[bi * m * k..(bi + 1) * m * k],
                                &g[bi * m * n..(bi + 1) * m * n],
                                &mut gb[bi * k * n..(bi + 1) * k * n],
                                m,
                                k,
                                n,
                            );
                        }
                    });
                }
            })
        })?;
        Ok(out_t)
    }
}

/// C += A(m,k) . B(k,n), row-major.
pub(crate) fn mm<T: Elem>(a: &[T], b: &[T], c_out: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let ci = &mut c_out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == T::zero() {
                continue;
            }
            let bp = &b[p * n..(p + 1) * n];
            for j in 0..n {
                ci[j] = ci[j] + aip * bp[j];
            }
        }
    }
}

/// C += A(m,n) . B(k,n)^T -> (m,k), row-major.
fn mm_nt<T: Elem>(a: &[T], b: &[T], c_out: &mut [T], m: usize, n: usize, k: usize) {
    for i in 0..m {
        let ai = &a[i * n..(i + 1) * n];
        for p in 0..k {
            let bp = &b[p * n..(p + 1) * n];
            let mut s = T::zero();
            for j in 0..n {
                s = s + ai[j] * bp[j];
            }
            c_out[i * k + p] = c_out[i * k + p] + s;
        }
    }
}

/// C += A(m,k)^T . B(m,n) -> (k,n), row-major.
fn mm_tn<T: Elem>(a: &[T], b: &[T], c_out: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let bi = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == T::zero() {
                continue;
            }
            let cp = &mut c_out[p * n..(p + 1) * n];
            for j in 0..n {
                cp[j] = cp[j] + aip * bi[j];
            }
        }
    }
}
