//! Transformer classification block built from shifted-window attention.
//!
//! Tokens live in `[N, H, W, D]` layout. Each block pair applies
//!
//! ```text
//! ẑ   = W-MSA(LN(z))  + z
//! z'  = MLP(LN(ẑ))    + ẑ
//! ẑ'  = SW-MSA(LN(z')) + z'
//! z'' = MLP(LN(ẑ'))   + ẑ'
//! ```
//!
//! where attention is restricted to `window × window` token windows, the
//! second half cyclically shifts the grid by `window / 2` first, and logits
//! get a learned relative position bias.

use std::sync::Arc;

use super::ceb::conv_bias;
use super::config::CectConfig;
use super::params::Bound;
use crate::error::{CectError, Result};
use crate::tensor::kernels::LAYER_NORM_EPS;
use crate::tensor::{Graph, Real, Tensor, Var};

/// Logit added across shifted-window boundaries; its softmax weight
/// underflows to exactly zero in both `f32` and `f64`.
pub const SHIFT_MASK_LOGIT: f64 = -1.0e9;

/// Maps each (query, key) pair inside a window to a row of the
/// `(2w-1)² × heads` bias table.
pub fn relative_position_index(window: usize) -> Vec<usize> {
    let t = window * window;
    let side = 2 * window - 1;
    let mut idx = Vec::with_capacity(t * t);
    for i in 0..t {
        let (ri, ci) = (i / window, i % window);
        for j in 0..t {
            let (rj, cj) = (j / window, j % window);
            let dr = ri + window - 1 - rj;
            let dc = ci + window - 1 - cj;
            idx.push(dr * side + dc);
        }
    }
    idx
}

/// Additive mask `[num_windows, t, t]` for a grid already rolled by
/// `-shift`. Tokens may attend to each other only if they fall in the same
/// band on both axes (before the wrap point, in the last window, or in the
/// wrapped strip).
pub fn shift_mask<T: Real>(grid_h: usize, grid_w: usize, window: usize, shift: usize) -> Tensor<T> {
    let band = |pos: usize, extent: usize| -> usize {
        if pos < extent - window {
            0
        } else if pos < extent - shift {
            1
        } else {
            2
        }
    };
    let (nh, nw) = (grid_h / window, grid_w / window);
    let t = window * window;
    let mut data = Vec::with_capacity(nh * nw * t * t);
    for wr in 0..nh {
        for wc in 0..nw {
            let label = |i: usize| {
                let r = wr * window + i / window;
                let c = wc * window + i % window;
                3 * band(r, grid_h) + band(c, grid_w)
            };
            for i in 0..t {
                for j in 0..t {
                    data.push(if label(i) == label(j) {
                        T::zero()
                    } else {
                        T::of(SHIFT_MASK_LOGIT)
                    });
                }
            }
        }
    }
    Tensor::from_parts(vec![nh * nw, t, t], data)
}

/// `[N, H, W, D]` → `[N·nw, window², D]`.
pub fn window_partition<T: Real>(g: &mut Graph<T>, x: Var, window: usize) -> Result<Var> {
    let [n, h, w, d] = tokens_shape(g, x)?;
    if window == 0 || h % window != 0 || w % window != 0 {
        return Err(CectError::dim(
            "window_partition",
            format!("grid {h}x{w} not divisible by window {window}"),
        ));
    }
    let y = g.reshape(x, &[n, h / window, window, w / window, window, d])?;
    let y = g.permute(y, &[0, 1, 3, 2, 4, 5])?;
    g.reshape(y, &[n * (h / window) * (w / window), window * window, d])
}

/// Inverse of [`window_partition`].
pub fn window_reverse<T: Real>(
    g: &mut Graph<T>,
    windows: Var,
    window: usize,
    n: usize,
    h: usize,
    w: usize,
) -> Result<Var> {
    let s = g.shape(windows).to_vec();
    if s.len() != 3
        || window == 0
        || h % window != 0
        || w % window != 0
        || s[0] != n * (h / window) * (w / window)
        || s[1] != window * window
    {
        return Err(CectError::dim(
            "window_reverse",
            format!("windows {s:?} do not tile a {n}x{h}x{w} grid with window {window}"),
        ));
    }
    let d = s[2];
    let y = g.reshape(windows, &[n, h / window, w / window, window, window, d])?;
    let y = g.permute(y, &[0, 1, 3, 2, 4, 5])?;
    g.reshape(y, &[n, h, w, d])
}

fn tokens_shape<T: Real>(g: &Graph<T>, x: Var) -> Result<[usize; 4]> {
    match *g.shape(x) {
        [n, h, w, d] => Ok([n, h, w, d]),
        ref s => Err(CectError::dim("tokens", format!("expected [N, H, W, D], got {s:?}"))),
    }
}

/// Window geometry of one attention sublayer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttentionGeometry {
    pub heads: usize,
    pub window: usize,
    pub shift: usize,
}

/// Result of one attention sublayer.
#[derive(Clone, Copy, Debug)]
pub struct AttentionOutput {
    /// `Attn(LN(z)) + z`, `[N, H, W, D]`.
    pub out: Var,
    /// Softmax weights, `[N, num_windows, heads, t, t]`.
    pub weights: Var,
}

/// `ẑ = MSA(LN(z)) + z` with (shifted) windows and relative position bias.
pub fn window_attention<T: Real>(
    g: &mut Graph<T>,
    p: &Bound,
    prefix: &str,
    z: Var,
    geo: AttentionGeometry,
) -> Result<AttentionOutput> {
    let [n, h, w, d] = tokens_shape(g, z)?;
    let AttentionGeometry { heads, window, shift } = geo;
    if heads == 0 || d % heads != 0 {
        return Err(CectError::Config(format!("{heads} heads do not divide dim {d}")));
    }
    if shift >= window && shift != 0 {
        return Err(CectError::Config(format!(
            "shift {shift} must be smaller than window {window}"
        )));
    }
    let hd = d / heads;
    let t = window * window;

    let gain = p.get(&format!("{prefix}.norm1.gain"))?;
    let bias = p.get(&format!("{prefix}.norm1.bias"))?;
    let mut x = g.layer_norm(z, gain, bias, LAYER_NORM_EPS)?;
    if shift > 0 {
        x = g.roll(x, 1, -(shift as isize))?;
        x = g.roll(x, 2, -(shift as isize))?;
    }
    let win = window_partition(g, x, window)?;
    let bw = g.shape(win)[0];
    let nw = bw / n;

    let qkv = g.linear(
        win,
        p.get(&format!("{prefix}.attn.qkv.weight"))?,
        Some(p.get(&format!("{prefix}.attn.qkv.bias"))?),
    )?;
    let qkv = g.reshape(qkv, &[bw, t, 3, heads, hd])?;
    let qkv = g.permute(qkv, &[2, 0, 3, 1, 4])?;
    let mut parts = [qkv; 3];
    for (i, part) in parts.iter_mut().enumerate() {
        let s = g.narrow(qkv, i, 1)?;
        *part = g.reshape(s, &[bw * heads, t, hd])?;
    }
    let [q, k, v] = parts;
    let q = g.scale(q, T::of(1.0 / (hd as f64).sqrt()))?;
    let logits = g.bmm(q, k, true)?;
    let logits = g.reshape(logits, &[n, nw, heads, t, t])?;

    let table = p.get(&format!("{prefix}.attn.rel_bias"))?;
    let rel = g.gather_rows(table, Arc::new(relative_position_index(window)))?;
    let rel = g.permute(rel, &[1, 0])?;
    let rel = g.reshape(rel, &[heads, t, t])?;
    let mut logits = g.add(logits, rel)?;
    if shift > 0 {
        let mask = shift_mask::<T>(h, w, window, shift).reshape(&[nw, 1, t, t])?;
        let mask = g.input(mask);
        logits = g.add(logits, mask)?;
    }
    let weights = g.softmax(logits)?;
    let attn = g.reshape(weights, &[bw * heads, t, t])?;
    let ctx = g.bmm(attn, v, false)?;
    let ctx = g.reshape(ctx, &[bw, heads, t, hd])?;
    let ctx = g.permute(ctx, &[0, 2, 1, 3])?;
    let ctx = g.reshape(ctx, &[bw, t, d])?;
    let proj = g.linear(
        ctx,
        p.get(&format!("{prefix}.attn.proj.weight"))?,
        Some(p.get(&format!("{prefix}.attn.proj.bias"))?),
    )?;
    let mut y = window_reverse(g, proj, window, n, h, w)?;
    if shift > 0 {
        y = g.roll(y, 1, shift as isize)?;
        y = g.roll(y, 2, shift as isize)?;
    }
    let out = g.add(y, z)?;
    Ok(AttentionOutput { out, weights })
}

/// Regular-window sublayer.
pub fn wmsa<T: Real>(g: &mut Graph<T>, p: &Bound, prefix: &str, z: Var, heads: usize, window: usize) -> Result<Var> {
    Ok(window_attention(
        g,
        p,
        prefix,
        z,
        AttentionGeometry {
            heads,
            window,
            shift: 0,
        },
    )?
    .out)
}

/// Shift used by the second block of a pair: half a window, or none when a
/// single window covers the grid.
pub fn shift_for(grid: usize, window: usize) -> usize {
    if grid > window {
        window / 2
    } else {
        0
    }
}

/// Shifted-window sublayer.
pub fn swmsa<T: Real>(g: &mut Graph<T>, p: &Bound, prefix: &str, z: Var, heads: usize, window: usize) -> Result<Var> {
    let grid = tokens_shape(g, z)?[1];
    let shift = shift_for(grid, window);
    Ok(window_attention(g, p, prefix, z, AttentionGeometry { heads, window, shift })?.out)
}

/// `z = MLP(LN(ẑ)) + ẑ`, two layers with GELU in between.
pub fn mlp_residual<T: Real>(g: &mut Graph<T>, p: &Bound, prefix: &str, z: Var) -> Result<Var> {
    let x = g.layer_norm(
        z,
        p.get(&format!("{prefix}.norm2.gain"))?,
        p.get(&format!("{prefix}.norm2.bias"))?,
        LAYER_NORM_EPS,
    )?;
    let x = g.linear(
        x,
        p.get(&format!("{prefix}.mlp.fc1.weight"))?,
        Some(p.get(&format!("{prefix}.mlp.fc1.bias"))?),
    )?;
    let x = g.gelu(x)?;
    let x = g.linear(
        x,
        p.get(&format!("{prefix}.mlp.fc2.weight"))?,
        Some(p.get(&format!("{prefix}.mlp.fc2.bias"))?),
    )?;
    g.add(x, z)
}

/// W-MSA block followed by SW-MSA block. `regular` and `shifted` are the
/// parameter prefixes of the two blocks.
pub fn cswt_block_pair<T: Real>(
    g: &mut Graph<T>,
    p: &Bound,
    regular: &str,
    shifted: &str,
    z: Var,
    heads: usize,
    window: usize,
) -> Result<Var> {
    let z_hat = wmsa(g, p, regular, z, heads, window)?;
    let z1 = mlp_residual(g, p, regular, z_hat)?;
    let z_hat = swmsa(g, p, shifted, z1, heads, window)?;
    mlp_residual(g, p, shifted, z_hat)
}

/// 2×2 neighbourhood concatenation, layer norm, then a linear map to twice
/// the width.
pub fn patch_merge<T: Real>(g: &mut Graph<T>, p: &Bound, prefix: &str, z: Var) -> Result<Var> {
    let [n, h, w, d] = tokens_shape(g, z)?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(CectError::dim("patch_merge", format!("odd grid {h}x{w}")));
    }
    let x = g.reshape(z, &[n, h / 2, 2, w / 2, 2, d])?;
    let x = g.permute(x, &[0, 1, 3, 4, 2, 5])?;
    let x = g.reshape(x, &[n, h / 2, w / 2, 4 * d])?;
    let x = g.layer_norm(
        x,
        p.get(&format!("{prefix}.norm.gain"))?,
        p.get(&format!("{prefix}.norm.bias"))?,
        LAYER_NORM_EPS,
    )?;
    g.linear(x, p.get(&format!("{prefix}.reduction.weight"))?, None)
}

/// Patch embedding through the final stage and global average pooling;
/// returns `[N, dims[3]]`.
pub fn tcb_features<T: Real>(g: &mut Graph<T>, p: &Bound, cfg: &CectConfig, input: Var) -> Result<Var> {
    let t = &cfg.tcb;
    let shape = g.shape(input).to_vec();
    match shape[..] {
        [_, c, h, w] if c == cfg.tcb_in_channels() && h == cfg.input_resolution && w == cfg.input_resolution => {}
        _ => {
            return Err(CectError::dim(
                "tcb",
                format!(
                    "expected [N, {}, {r}, {r}], got {shape:?}",
                    cfg.tcb_in_channels(),
                    r = cfg.input_resolution
                ),
            ))
        }
    }
    let grids = cfg.token_grids();
    for (stage, grid) in grids.iter().enumerate() {
        if grid % t.window != 0 {
            return Err(CectError::Config(format!(
                "stage {stage}: token grid {grid} not divisible by window {}",
                t.window
            )));
        }
    }
    let x = conv_bias(g, p, "tcb.patch", input, t.patch_size, 0)?;
    let x = g.permute(x, &[0, 2, 3, 1])?;
    let mut z = g.layer_norm(
        x,
        p.get("tcb.patch_norm.gain")?,
        p.get("tcb.patch_norm.bias")?,
        LAYER_NORM_EPS,
    )?;
    for stage in 0..4 {
        for pair in 0..t.depths[stage] {
            let regular = format!("tcb.s{stage}.b{}", 2 * pair);
            let shifted = format!("tcb.s{stage}.b{}", 2 * pair + 1);
            z = cswt_block_pair(g, p, &regular, &shifted, z, t.heads[stage], t.window)?;
        }
        if stage < 3 {
            z = patch_merge(g, p, &format!("tcb.s{stage}.merge"), z)?;
        }
    }
    let z = g.layer_norm(z, p.get("tcb.norm.gain")?, p.get("tcb.norm.bias")?, LAYER_NORM_EPS)?;
    let [n, h, w, d] = tokens_shape(g, z)?;
    let z = g.reshape(z, &[n, h * w, d])?;
    g.mean_axis(z, 1)
}

/// Linear prediction head with two outputs.
pub fn head<T: Real>(g: &mut Graph<T>, p: &Bound, features: Var) -> Result<Var> {
    g.linear(features, p.get("head.weight")?, Some(p.get("head.bias")?))
}

/// Transformer block plus head; returns logits `[N, 2]`.
pub fn tcb_forward<T: Real>(g: &mut Graph<T>, p: &Bound, cfg: &CectConfig, input: Var) -> Result<Var> {
    let f = tcb_features(g, p, cfg, input)?;
    head(g, p, f)
}
