//! Forward and backward numeric kernels on flat row-major buffers.
//!
//! Each kernel writes disjoint output rows, so results are bit-identical
//! whether or not the `parallel` feature is enabled.

use super::{numel, Real, Tensor};
use crate::error::{CectError, Result};
use crate::par;

// ---------------------------------------------------------------------------
// Matrix products

/// `c[m,n] = a[m,k] · b[k,n]`
pub fn gemm_nn<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::zero(); m * n];
    par::for_each_chunk(&mut c, n.max(1), k * n, |i, row| {
        let ar = &a[i * k..(i + 1) * k];
        for (p, &av) in ar.iter().enumerate() {
            let br = &b[p * n..(p + 1) * n];
            for (cv, &bv) in row.iter_mut().zip(br) {
                *cv += av * bv;
            }
        }
    });
    c
}

/// `c[m,n] = a[m,k] · b[n,k]ᵀ`
pub fn gemm_nt<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::zero(); m * n];
    par::for_each_chunk(&mut c, n.max(1), k * n, |i, row| {
        let ar = &a[i * k..(i + 1) * k];
        for (j, cv) in row.iter_mut().enumerate() {
            let br = &b[j * k..(j + 1) * k];
            let mut acc = T::zero();
            for (&x, &y) in ar.iter().zip(br) {
                acc += x * y;
            }
            *cv = acc;
        }
    });
    c
}

/// `c[m,n] = a[k,m]ᵀ · b[k,n]`
pub fn gemm_tn<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::zero(); m * n];
    par::for_each_chunk(&mut c, n.max(1), k * n, |i, row| {
        for p in 0..k {
            let av = a[p * m + i];
            let br = &b[p * n..(p + 1) * n];
            for (cv, &bv) in row.iter_mut().zip(br) {
                *cv += av * bv;
            }
        }
    });
    c
}

fn gemm_nn_seq<T: Real>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let row = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            let br = &b[p * n..(p + 1) * n];
            for (cv, &bv) in row.iter_mut().zip(br) {
                *cv += av * bv;
            }
        }
    }
}

fn gemm_nt_seq<T: Real>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let ar = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let br = &b[j * k..(j + 1) * k];
            let mut acc = T::zero();
            for (&x, &y) in ar.iter().zip(br) {
                acc += x * y;
            }
            c[i * n + j] += acc;
        }
    }
}

fn gemm_tn_seq<T: Real>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    for p in 0..k {
        let br = &b[p * n..(p + 1) * n];
        for i in 0..m {
            let av = a[p * m + i];
            let row = &mut c[i * n..(i + 1) * n];
            for (cv, &bv) in row.iter_mut().zip(br) {
                *cv += av * bv;
            }
        }
    }
}

/// Which operand of a batched product is transposed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Transpose {
    None,
    A,
    B,
}

/// Batched product, each batch computed sequentially and batches fanned out.
/// Shapes per batch: `None`: [m,k]·[k,n]; `B`: [m,k]·[n,k]ᵀ; `A`: [k,m]ᵀ·[k,n].
pub fn bmm<T: Real>(a: &[T], b: &[T], batch: usize, m: usize, k: usize, n: usize, trans: Transpose) -> Vec<T> {
    let mut c = vec![T::zero(); batch * m * n];
    let (sa, sb) = (m * k, k * n);
    par::for_each_chunk(&mut c, (m * n).max(1), m * k * n, |bi, out| {
        let ab = &a[bi * sa..(bi + 1) * sa];
        let bb = &b[bi * sb..(bi + 1) * sb];
        match trans {
            Transpose::None => gemm_nn_seq(ab, bb, out, m, k, n),
            Transpose::B => gemm_nt_seq(ab, bb, out, m, k, n),
            Transpose::A => gemm_tn_seq(ab, bb, out, m, k, n),
        }
    });
    c
}

pub fn matmul<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0] {
        return Err(CectError::ShapeMismatch {
            op: "matmul",
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    Ok(Tensor::from_parts(vec![m, n], gemm_nn(a.data(), b.data(), m, k, n)))
}

// ---------------------------------------------------------------------------
// Convolutions

/// Geometry of a 2-d cross-correlation over one `[c, h, w]` plane stack.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub channels: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

/// `floor((n + 2p - k) / s) + 1`, or an error when non-positive.
pub fn conv_out_extent(n: usize, k: usize, stride: usize, pad: usize) -> Result<usize> {
    if stride == 0 {
        return Err(CectError::dim("conv2d", "stride must be >= 1"));
    }
    let padded = n + 2 * pad;
    if k == 0 || padded < k {
        return Err(CectError::dim(
            "conv2d",
            format!("kernel {k} larger than padded extent {padded}"),
        ));
    }
    Ok((padded - k) / stride + 1)
}

/// `(n - 1)·s - 2p + k`, or an error when non-positive.
pub fn conv_transpose_out_extent(n: usize, k: usize, stride: usize, pad: usize) -> Result<usize> {
    if stride == 0 {
        return Err(CectError::dim("transposed_conv2d", "stride must be >= 1"));
    }
    if n == 0 {
        return Err(CectError::dim("transposed_conv2d", "empty input extent"));
    }
    let full = (n - 1) * stride + k;
    if full <= 2 * pad {
        return Err(CectError::dim(
            "transposed_conv2d",
            format!("non-positive output extent for n={n} k={k} s={stride} p={pad}"),
        ));
    }
    Ok(full - 2 * pad)
}

impl ConvGeometry {
    pub fn new(channels: usize, h: usize, w: usize, kh: usize, kw: usize, stride: usize, pad: usize) -> Result<Self> {
        Ok(ConvGeometry {
            channels,
            h,
            w,
            kh,
            kw,
            stride,
            pad,
            out_h: conv_out_extent(h, kh, stride, pad)?,
            out_w: conv_out_extent(w, kw, stride, pad)?,
        })
    }

    fn col_rows(&self) -> usize {
        self.channels * self.kh * self.kw
    }

    fn col_cols(&self) -> usize {
        self.out_h * self.out_w
    }
}

/// `[c, h, w]` → `[c·kh·kw, out_h·out_w]`
pub fn im2col<T: Real>(x: &[T], g: &ConvGeometry) -> Vec<T> {
    let cols_n = g.col_cols();
    let mut cols = vec![T::zero(); g.col_rows() * cols_n];
    par::for_each_chunk(&mut cols, cols_n.max(1), cols_n, |row, out| {
        let c = row / (g.kh * g.kw);
        let ki = (row / g.kw) % g.kh;
        let kj = row % g.kw;
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for oi in 0..g.out_h {
            let ii = (oi * g.stride + ki) as isize - g.pad as isize;
            if ii < 0 || ii >= g.h as isize {
                continue;
            }
            let src = &plane[ii as usize * g.w..(ii as usize + 1) * g.w];
            let dst = &mut out[oi * g.out_w..(oi + 1) * g.out_w];
            for (oj, d) in dst.iter_mut().enumerate() {
                let jj = (oj * g.stride + kj) as isize - g.pad as isize;
                if jj >= 0 && jj < g.w as isize {
                    *d = src[jj as usize];
                }
            }
        }
    });
    cols
}

/// Adjoint of [`im2col`]: scatter-adds columns back into `[c, h, w]`.
pub fn col2im<T: Real>(cols: &[T], g: &ConvGeometry) -> Vec<T> {
    let cols_n = g.col_cols();
    let plane_len = g.h * g.w;
    let mut x = vec![T::zero(); g.channels * plane_len];
    par::for_each_chunk(&mut x, plane_len.max(1), g.kh * g.kw * cols_n, |c, plane| {
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let src = &cols[row * cols_n..(row + 1) * cols_n];
                for oi in 0..g.out_h {
                    let ii = (oi * g.stride + ki) as isize - g.pad as isize;
                    if ii < 0 || ii >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[ii as usize * g.w..(ii as usize + 1) * g.w];
                    for oj in 0..g.out_w {
                        let jj = (oj * g.stride + kj) as isize - g.pad as isize;
                        if jj >= 0 && jj < g.w as isize {
                            dst[jj as usize] += src[oi * g.out_w + oj];
                        }
                    }
                }
            }
        }
    });
    x
}

fn check_rank4<T: Real>(op: &'static str, t: &Tensor<T>) -> Result<[usize; 4]> {
    match *t.shape() {
        [a, b, c, d] => Ok([a, b, c, d]),
        _ => Err(CectError::dim(
            op,
            format!("expected rank-4 tensor, got {:?}", t.shape()),
        )),
    }
}

/// Cross-correlation of `x[N,C,H,W]` with `k[O,C,kh,kw]`, zero padding.
pub fn conv2d<T: Real>(x: &Tensor<T>, k: &Tensor<T>, stride: usize, pad: usize) -> Result<Tensor<T>> {
    let [n, c, h, w] = check_rank4("conv2d", x)?;
    let [o, kc, kh, kw] = check_rank4("conv2d", k)?;
    if kc != c {
        return Err(CectError::ShapeMismatch {
            op: "conv2d",
            left: x.shape().to_vec(),
            right: k.shape().to_vec(),
        });
    }
    let g = ConvGeometry::new(c, h, w, kh, kw, stride, pad)?;
    let plane_in = c * h * w;
    let plane_out = o * g.out_h * g.out_w;
    let mut out = Vec::with_capacity(n * plane_out);
    for b in 0..n {
        let cols = im2col(&x.data()[b * plane_in..(b + 1) * plane_in], &g);
        out.extend(gemm_nn(k.data(), &cols, o, g.col_rows(), g.col_cols()));
    }
    Ok(Tensor::from_parts(vec![n, o, g.out_h, g.out_w], out))
}

/// Gradients of [`conv2d`] with respect to input and kernel.
pub fn conv2d_backward<T: Real>(
    x: &Tensor<T>,
    k: &Tensor<T>,
    grad_out: &[T],
    stride: usize,
    pad: usize,
    need_x: bool,
    need_k: bool,
) -> Result<(Option<Vec<T>>, Option<Vec<T>>)> {
    let [n, c, h, w] = check_rank4("conv2d", x)?;
    let [o, _, kh, kw] = check_rank4("conv2d", k)?;
    let g = ConvGeometry::new(c, h, w, kh, kw, stride, pad)?;
    let (rows, ncols) = (g.col_rows(), g.col_cols());
    let plane_in = c * h * w;
    let plane_out = o * ncols;
    let mut dx = need_x.then(|| Vec::with_capacity(n * plane_in));
    let mut dk = need_k.then(|| vec![T::zero(); k.numel()]);
    for b in 0..n {
        let gb = &grad_out[b * plane_out..(b + 1) * plane_out];
        if let Some(dx) = dx.as_mut() {
            let dcols = gemm_tn(k.data(), gb, rows, o, ncols);
            dx.extend(col2im(&dcols, &g));
        }
        if let Some(dk) = dk.as_mut() {
            let cols = im2col(&x.data()[b * plane_in..(b + 1) * plane_in], &g);
            let part = gemm_nt(gb, &cols, o, ncols, rows);
            dk.iter_mut().zip(part).for_each(|(d, p)| *d += p);
        }
    }
    Ok((dx, dk))
}

/// Transposed convolution of `x[N,C,H,W]` with `k[C,O,kh,kw]`; the adjoint
/// of [`conv2d`] with respect to its input.
pub fn conv_transpose2d<T: Real>(x: &Tensor<T>, k: &Tensor<T>, stride: usize, pad: usize) -> Result<Tensor<T>> {
    let [n, c, h, w] = check_rank4("transposed_conv2d", x)?;
    let [kc, o, kh, kw] = check_rank4("transposed_conv2d", k)?;
    if kc != c {
        return Err(CectError::ShapeMismatch {
            op: "transposed_conv2d",
            left: x.shape().to_vec(),
            right: k.shape().to_vec(),
        });
    }
    let out_h = conv_transpose_out_extent(h, kh, stride, pad)?;
    let out_w = conv_transpose_out_extent(w, kw, stride, pad)?;
    let g = ConvGeometry::new(o, out_h, out_w, kh, kw, stride, pad)?;
    debug_assert_eq!((g.out_h, g.out_w), (h, w));
    let plane_in = c * h * w;
    let mut out = Vec::with_capacity(n * o * out_h * out_w);
    for b in 0..n {
        let cols = gemm_tn(
            k.data(),
            &x.data()[b * plane_in..(b + 1) * plane_in],
            g.col_rows(),
            c,
            h * w,
        );
        out.extend(col2im(&cols, &g));
    }
    Ok(Tensor::from_parts(vec![n, o, out_h, out_w], out))
}

pub fn conv_transpose2d_backward<T: Real>(
    x: &Tensor<T>,
    k: &Tensor<T>,
    grad_out: &[T],
    stride: usize,
    pad: usize,
    need_x: bool,
    need_k: bool,
) -> Result<(Option<Vec<T>>, Option<Vec<T>>)> {
    let [n, c, h, w] = check_rank4("transposed_conv2d", x)?;
    let [_, o, kh, kw] = check_rank4("transposed_conv2d", k)?;
    let out_h = conv_transpose_out_extent(h, kh, stride, pad)?;
    let out_w = conv_transpose_out_extent(w, kw, stride, pad)?;
    let g = ConvGeometry::new(o, out_h, out_w, kh, kw, stride, pad)?;
    let rows = g.col_rows();
    let plane_in = c * h * w;
    let plane_out = o * out_h * out_w;
    let mut dx = need_x.then(|| Vec::with_capacity(n * plane_in));
    let mut dk = need_k.then(|| vec![T::zero(); k.numel()]);
    for b in 0..n {
        let gcols = im2col(&grad_out[b * plane_out..(b + 1) * plane_out], &g);
        if let Some(dx) = dx.as_mut() {
            dx.extend(gemm_nn(k.data(), &gcols, c, rows, h * w));
        }
        if let Some(dk) = dk.as_mut() {
            let part = gemm_nt(&x.data()[b * plane_in..(b + 1) * plane_in], &gcols, c, h * w, rows);
            dk.iter_mut().zip(part).for_each(|(d, p)| *d += p);
        }
    }
    Ok((dx, dk))
}

// ---------------------------------------------------------------------------
// Resampling and layout

pub fn upsample_nearest<T: Real>(x: &Tensor<T>, factor: usize) -> Result<Tensor<T>> {
    if factor < 1 {
        return Err(CectError::Parameter {
            name: "factor".into(),
            detail: "upsample factor must be >= 1".into(),
        });
    }
    let [n, c, h, w] = check_rank4("upsample_nearest", x)?;
    let (oh, ow) = (h * factor, w * factor);
    let mut out = vec![T::zero(); n * c * oh * ow];
    par::for_each_chunk(&mut out, oh * ow, oh * ow, |plane, dst| {
        let src = &x.data()[plane * h * w..(plane + 1) * h * w];
        for i in 0..oh {
            for j in 0..ow {
                dst[i * ow + j] = src[(i / factor) * w + j / factor];
            }
        }
    });
    Ok(Tensor::from_parts(vec![n, c, oh, ow], out))
}

pub fn upsample_nearest_backward<T: Real>(grad_out: &[T], in_shape: &[usize], factor: usize) -> Vec<T> {
    let (h, w) = (in_shape[2], in_shape[3]);
    let (oh, ow) = (h * factor, w * factor);
    let mut dx = vec![T::zero(); numel(in_shape)];
    par::for_each_chunk(&mut dx, h * w, oh * ow, |plane, dst| {
        let src = &grad_out[plane * oh * ow..(plane + 1) * oh * ow];
        for i in 0..oh {
            for j in 0..ow {
                dst[(i / factor) * w + j / factor] += src[i * ow + j];
            }
        }
    });
    dx
}

pub fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Axis permutation: output axis `i` is input axis `axes[i]`.
pub fn permute<T: Real>(data: &[T], shape: &[usize], axes: &[usize]) -> (Vec<T>, Vec<usize>) {
    let in_strides = strides(shape);
    let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let src_strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let total = data.len();
    let mut out = Vec::with_capacity(total);
    let rank = out_shape.len();
    if rank == 0 {
        return (data.to_vec(), out_shape);
    }
    let inner = out_shape[rank - 1];
    let inner_stride = src_strides[rank - 1];
    let mut idx = vec![0usize; rank.saturating_sub(1)];
    let outer: usize = out_shape[..rank - 1].iter().product();
    for _ in 0..outer {
        let base: usize = idx.iter().zip(&src_strides).map(|(i, s)| i * s).sum();
        for j in 0..inner {
            out.push(data[base + j * inner_stride]);
        }
        for d in (0..rank - 1).rev() {
            idx[d] += 1;
            if idx[d] < out_shape[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    (out, out_shape)
}

pub fn inverse_axes(axes: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; axes.len()];
    for (i, &a) in axes.iter().enumerate() {
        inv[a] = i;
    }
    inv
}

/// Cyclic roll along `axis`: `out[(i + shift) mod n] = in[i]`.
pub fn roll<T: Real>(data: &[T], shape: &[usize], axis: usize, shift: isize) -> Vec<T> {
    let n = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let s = shift.rem_euclid(n as isize) as usize;
    let mut out = vec![T::zero(); data.len()];
    for o in 0..outer {
        for i in 0..n {
            let dst = (i + s) % n;
            let src_off = (o * n + i) * inner;
            let dst_off = (o * n + dst) * inner;
            out[dst_off..dst_off + inner].copy_from_slice(&data[src_off..src_off + inner]);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Broadcasting

/// Right-aligned broadcast of two shapes.
pub fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i + a.len() >= rank { a[i + a.len() - rank] } else { 1 };
        let db = if i + b.len() >= rank { b[i + b.len() - rank] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// Strides of `shape` viewed inside `out_shape`, zero along broadcast axes.
fn broadcast_strides(shape: &[usize], out_shape: &[usize]) -> Vec<usize> {
    let rank = out_shape.len();
    let own = strides(shape);
    (0..rank)
        .map(|i| {
            if i + shape.len() < rank {
                0
            } else {
                let j = i + shape.len() - rank;
                if shape[j] == 1 {
                    0
                } else {
                    own[j]
                }
            }
        })
        .collect()
}

/// Source offset in a broadcast input for each flat output index.
pub fn broadcast_index(shape: &[usize], out_shape: &[usize]) -> Vec<usize> {
    let bs = broadcast_strides(shape, out_shape);
    let total = numel(out_shape);
    let mut idx = vec![0usize; out_shape.len()];
    let mut out = Vec::with_capacity(total);
    let mut off = 0usize;
    for _ in 0..total {
        out.push(off);
        for d in (0..out_shape.len()).rev() {
            idx[d] += 1;
            off += bs[d];
            if idx[d] < out_shape[d] {
                break;
            }
            off -= bs[d] * idx[d];
            idx[d] = 0;
        }
    }
    out
}

/// Sums a gradient of `out_shape` down to a broadcast input of `shape`.
pub fn reduce_broadcast<T: Real>(grad: &[T], shape: &[usize], out_shape: &[usize]) -> Vec<T> {
    if shape == out_shape {
        return grad.to_vec();
    }
    let mut r = vec![T::zero(); numel(shape)];
    for (g, src) in grad.iter().zip(broadcast_index(shape, out_shape)) {
        r[src] += *g;
    }
    r
}

// ---------------------------------------------------------------------------
// Normalization and activations

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Row-wise layer norm over the last axis; returns `(y, xhat, rstd)`.
pub fn layer_norm<T: Real>(x: &[T], gain: &[T], bias: &[T], d: usize, eps: f64) -> (Vec<T>, Vec<T>, Vec<T>) {
    let rows = x.len() / d;
    let inv_d = T::of(1.0 / d as f64);
    let stats: Vec<(T, T)> = par::map_range(rows, |r| {
        let row = &x[r * d..(r + 1) * d];
        let mean = row.iter().copied().sum::<T>() * inv_d;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_d;
        (mean, T::one() / (var + T::of(eps)).sqrt())
    });
    let mut xhat = vec![T::zero(); x.len()];
    par::for_each_chunk(&mut xhat, d, 2 * d, |r, out| {
        let (mean, rs) = stats[r];
        for (o, &v) in out.iter_mut().zip(&x[r * d..(r + 1) * d]) {
            *o = (v - mean) * rs;
        }
    });
    let rstd: Vec<T> = stats.iter().map(|&(_, rs)| rs).collect();
    let mut y = vec![T::zero(); x.len()];
    par::for_each_chunk(&mut y, d, 2 * d, |r, out| {
        let xh = &xhat[r * d..(r + 1) * d];
        for ((o, &v), (&g, &b)) in out.iter_mut().zip(xh).zip(gain.iter().zip(bias)) {
            *o = v * g + b;
        }
    });
    (y, xhat, rstd)
}

/// Returns `(dx, dgain, dbias)`.
pub fn layer_norm_backward<T: Real>(
    grad: &[T],
    xhat: &[T],
    rstd: &[T],
    gain: &[T],
    d: usize,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let inv_d = T::of(1.0 / d as f64);
    let mut dx = vec![T::zero(); grad.len()];
    par::for_each_chunk(&mut dx, d, 6 * d, |r, out| {
        let g = &grad[r * d..(r + 1) * d];
        let xh = &xhat[r * d..(r + 1) * d];
        let mut mean_dxh = T::zero();
        let mut mean_dxh_xh = T::zero();
        for i in 0..d {
            let dxh = g[i] * gain[i];
            mean_dxh += dxh;
            mean_dxh_xh += dxh * xh[i];
        }
        mean_dxh *= inv_d;
        mean_dxh_xh *= inv_d;
        for i in 0..d {
            out[i] = rstd[r] * (g[i] * gain[i] - mean_dxh - xh[i] * mean_dxh_xh);
        }
    });
    let mut dgain = vec![T::zero(); d];
    let mut dbias = vec![T::zero(); d];
    for (g, xh) in grad.chunks(d).zip(xhat.chunks(d)) {
        for i in 0..d {
            dgain[i] += g[i] * xh[i];
            dbias[i] += g[i];
        }
    }
    (dx, dgain, dbias)
}

/// Softmax over the last axis with max subtraction.
pub fn softmax<T: Real>(x: &[T], n: usize) -> Vec<T> {
    let mut y = vec![T::zero(); x.len()];
    par::for_each_chunk(&mut y, n, 4 * n, |r, out| {
        let row = &x[r * n..(r + 1) * n];
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for (o, &v) in out.iter_mut().zip(row) {
            *o = (v - max).exp();
            sum += *o;
        }
        let inv = T::one() / sum;
        out.iter_mut().for_each(|o| *o *= inv);
    });
    y
}

pub fn softmax_backward<T: Real>(y: &[T], grad: &[T], n: usize) -> Vec<T> {
    let mut dx = vec![T::zero(); y.len()];
    par::for_each_chunk(&mut dx, n, 3 * n, |r, out| {
        let yr = &y[r * n..(r + 1) * n];
        let gr = &grad[r * n..(r + 1) * n];
        let dot: T = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
        for i in 0..n {
            out[i] = yr[i] * (gr[i] - dot);
        }
    });
    dx
}

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;
const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Exact GELU, `x·Φ(x)`.
#[inline]
pub fn gelu<T: Real>(x: T) -> T {
    T::of(0.5) * x * (T::one() + (x * T::of(FRAC_1_SQRT_2)).erf())
}

#[inline]
pub fn gelu_grad<T: Real>(x: T) -> T {
    let cdf = T::of(0.5) * (T::one() + (x * T::of(FRAC_1_SQRT_2)).erf());
    let pdf = T::of(FRAC_1_SQRT_2PI) * (-(x * x) * T::of(0.5)).exp();
    cdf + x * pdf
}

/// Mean over `axis`, removing it from the shape.
pub fn mean_axis<T: Real>(x: &[T], shape: &[usize], axis: usize) -> (Vec<T>, Vec<usize>) {
    let n = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let inv = T::of(1.0 / n as f64);
    let mut out = vec![T::zero(); outer * inner];
    for o in 0..outer {
        let dst = &mut out[o * inner..(o + 1) * inner];
        for i in 0..n {
            let src = &x[(o * n + i) * inner..(o * n + i + 1) * inner];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
        dst.iter_mut().for_each(|d| *d *= inv);
    }
    let mut out_shape = shape.to_vec();
    out_shape.remove(axis);
    (out, out_shape)
}

pub fn mean_axis_backward<T: Real>(grad: &[T], in_shape: &[usize], axis: usize) -> Vec<T> {
    let n = in_shape[axis];
    let inner: usize = in_shape[axis + 1..].iter().product();
    let outer: usize = in_shape[..axis].iter().product();
    let inv = T::of(1.0 / n as f64);
    let mut dx = vec![T::zero(); numel(in_shape)];
    for o in 0..outer {
        let src = &grad[o * inner..(o + 1) * inner];
        for i in 0..n {
            let dst = &mut dx[(o * n + i) * inner..(o * n + i + 1) * inner];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = s * inv;
            }
        }
    }
    dx
}
