//! Resize, crop and normalize decoded images into `[3, R, R]` tensors.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::image::{decode, Image};
use crate::error::{CectError, Result};
use crate::tensor::Tensor;

/// Per-channel `(x - mean) / std`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: [f32; 3],
    pub std: [f32; 3],
}

impl Default for Normalization {
    fn default() -> Self {
        Normalization {
            mean: [0.5; 3],
            std: [0.5; 3],
        }
    }
}

impl Normalization {
    pub fn validate(&self) -> Result<()> {
        if self.std.iter().any(|&s| !(s > 0.0) || !s.is_finite()) || self.mean.iter().any(|m| !m.is_finite()) {
            return Err(CectError::Config(format!("invalid normalization {self:?}")));
        }
        Ok(())
    }

    /// Normalizes a `[3, H, W]` or `[N, 3, H, W]` buffer in place.
    pub fn apply(&self, data: &mut [f32], plane: usize) {
        for (i, chunk) in data.chunks_mut(plane).enumerate() {
            let c = i % 3;
            let (m, s) = (self.mean[c], self.std[c]);
            chunk.iter_mut().for_each(|v| *v = (*v - m) / s);
        }
    }
}

/// Bilinear resampling of a planar `[C, H, W]` buffer with half-pixel
/// centers: output pixel `d` samples source coordinate
/// `(d + 0.5)·(src / dst) - 0.5`, clamped to the image.
pub fn resize_bilinear(src: &[f32], channels: usize, h: usize, w: usize, nh: usize, nw: usize) -> Vec<f32> {
    let taps = |n_out: usize, n_in: usize| -> Vec<(usize, usize, f32)> {
        let scale = n_in as f64 / n_out as f64;
        (0..n_out)
            .map(|d| {
                let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (n_in - 1) as f64);
                let lo = s.floor() as usize;
                let hi = (lo + 1).min(n_in - 1);
                (lo, hi, (s - lo as f64) as f32)
            })
            .collect()
    };
    let (ty, tx) = (taps(nh, h), taps(nw, w));
    let mut out = Vec::with_capacity(channels * nh * nw);
    for c in 0..channels {
        let plane = &src[c * h * w..(c + 1) * h * w];
        for &(y0, y1, fy) in &ty {
            for &(x0, x1, fx) in &tx {
                let top = plane[y0 * w + x0] * (1.0 - fx) + plane[y0 * w + x1] * fx;
                let bot = plane[y1 * w + x0] * (1.0 - fx) + plane[y1 * w + x1] * fx;
                out.push(top * (1.0 - fy) + bot * fy);
            }
        }
    }
    out
}

/// Copies the `ch × cw` window at `(top, left)` out of a planar buffer.
pub fn crop(
    src: &[f32],
    channels: usize,
    h: usize,
    w: usize,
    top: usize,
    left: usize,
    ch: usize,
    cw: usize,
) -> Vec<f32> {
    debug_assert!(top + ch <= h && left + cw <= w);
    let mut out = Vec::with_capacity(channels * ch * cw);
    for c in 0..channels {
        for y in top..top + ch {
            let row = (c * h + y) * w;
            out.extend_from_slice(&src[row + left..row + left + cw]);
        }
    }
    out
}

/// Planar `[3, H, W]` copy of an interleaved image; gray is replicated.
pub fn to_planar_rgb(img: &Image) -> Vec<f32> {
    let n = img.width * img.height;
    let mut out = vec![0.0; 3 * n];
    for i in 0..n {
        for c in 0..3 {
            let src = if img.channels == 1 { 0 } else { c };
            out[c * n + i] = img.data[i * img.channels + src];
        }
    }
    out
}

/// Shorter side to `resolution` (bilinear), then a centered square crop.
/// Values stay in `[0, 1]`.
pub fn fit_square(img: &Image, resolution: usize) -> Tensor {
    let (w, h) = (img.width, img.height);
    let (nw, nh) = if w <= h {
        (
            resolution,
            ((h as f64 * resolution as f64 / w as f64).round() as usize).max(resolution),
        )
    } else {
        (
            ((w as f64 * resolution as f64 / h as f64).round() as usize).max(resolution),
            resolution,
        )
    };
    let planar = to_planar_rgb(img);
    let resized = if (nw, nh) == (w, h) {
        planar
    } else {
        resize_bilinear(&planar, 3, h, w, nh, nw)
    };
    let (top, left) = ((nh - resolution) / 2, (nw - resolution) / 2);
    let data = crop(&resized, 3, nh, nw, top, left, resolution, resolution);
    Tensor::new(vec![3, resolution, resolution], data).expect("crop size")
}

/// Decodes, fits to `resolution` and normalizes.
pub fn preprocess(bytes: &[u8], path: &Path, resolution: usize, norm: &Normalization) -> Result<Tensor> {
    if resolution == 0 {
        return Err(CectError::Config("resolution must be positive".into()));
    }
    let img = decode(bytes, path)?;
    let mut t = fit_square(&img, resolution);
    norm.apply(t.data_mut(), resolution * resolution);
    Ok(t)
}
