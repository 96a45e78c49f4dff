//! Training-time augmentation: random resized crop and horizontal flip.

use serde::{Deserialize, Serialize};

use super::preprocess::{crop, resize_bilinear};
use crate::error::{CectError, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    /// Crop area as a fraction of the image area.
    pub scale: (f64, f64),
    /// Crop aspect ratio (width / height).
    pub ratio: (f64, f64),
    pub flip_p: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            scale: (0.6, 1.0),
            ratio: (3.0 / 4.0, 4.0 / 3.0),
            flip_p: 0.5,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        let (s0, s1) = self.scale;
        if !(s0 > 0.0 && s0 <= s1 && s1 <= 1.0) {
            return Err(CectError::Config(format!(
                "crop scale range ({s0}, {s1}) must lie in (0, 1]"
            )));
        }
        let (r0, r1) = self.ratio;
        if !(r0 > 0.0 && r0 <= r1 && r1.is_finite()) {
            return Err(CectError::Config(format!("crop ratio range ({r0}, {r1}) is invalid")));
        }
        if !(0.0..=1.0).contains(&self.flip_p) {
            return Err(CectError::Config(format!(
                "flip probability {} outside [0, 1]",
                self.flip_p
            )));
        }
        Ok(())
    }
}

/// Crop window `(top, left, height, width)`.
pub type CropBox = (usize, usize, usize, usize);

/// Area/aspect rejection sampling with ten attempts, falling back to the
/// largest centered crop whose aspect ratio is within range.
pub fn sample_crop(h: usize, w: usize, cfg: &AugmentConfig, rng: &mut Rng) -> CropBox {
    let area = (h * w) as f64;
    let (lr0, lr1) = (cfg.ratio.0.ln(), cfg.ratio.1.ln());
    for _ in 0..10 {
        let target = area * rng.uniform_range(cfg.scale.0, cfg.scale.1);
        let aspect = rng.uniform_range(lr0, lr1).exp();
        let cw = (target * aspect).sqrt().round() as usize;
        let ch = (target / aspect).sqrt().round() as usize;
        if cw > 0 && ch > 0 && cw <= w && ch <= h {
            let top = rng.below((h - ch + 1) as u64) as usize;
            let left = rng.below((w - cw + 1) as u64) as usize;
            return (top, left, ch, cw);
        }
    }
    let in_ratio = w as f64 / h as f64;
    let (ch, cw) = if in_ratio < cfg.ratio.0 {
        (((w as f64 / cfg.ratio.0).round() as usize).min(h), w)
    } else if in_ratio > cfg.ratio.1 {
        (h, ((h as f64 * cfg.ratio.1).round() as usize).min(w))
    } else {
        (h, w)
    };
    ((h - ch) / 2, (w - cw) / 2, ch, cw)
}

/// Mirrors a planar `[C, H, W]` image left to right.
pub fn hflip(image: &Tensor) -> Tensor {
    let w = *image.shape().last().expect("rank ≥ 1");
    let mut out = image.clone();
    out.data_mut().chunks_mut(w).for_each(<[f32]>::reverse);
    out
}

/// Random resized crop back to the input extent, then a random flip.
pub fn augment(image: &Tensor, cfg: &AugmentConfig, rng: &mut Rng) -> Tensor {
    let (c, h, w) = match *image.shape() {
        [c, h, w] => (c, h, w),
        ref s => panic!("augment expects [C, H, W], got {s:?}"),
    };
    let (top, left, ch, cw) = sample_crop(h, w, cfg, rng);
    let patch = crop(image.data(), c, h, w, top, left, ch, cw);
    let data = if (ch, cw) == (h, w) {
        patch
    } else {
        resize_bilinear(&patch, c, ch, cw, h, w)
    };
    let out = Tensor::new(vec![c, h, w], data).expect("same extent");
    if rng.bernoulli(cfg.flip_p) {
        hflip(&out)
    } else {
        out
    }
}
