//! Two-class synthetic images.
//!
//! Both classes share a fine checkerboard texture with pixel noise and a
//! random brightness offset. Positive images add a zero-mean linear
//! intensity ramp across the whole frame in a random direction, so the
//! class signal lives in the lowest spatial frequencies while the pixel
//! statistics of any small patch look alike.

use std::path::Path;

use super::image::encode_pnm;
use super::manifest::{Label, Manifest, Record};
use crate::error::{CectError, Result};
use crate::rng::Rng;

const CHECKER_AMPLITUDE: f64 = 0.12;
const NOISE_STD: f64 = 0.06;
const BRIGHTNESS_JITTER: f64 = 0.05;
const RAMP_AMPLITUDE: f64 = 0.2;

/// One `resolution × resolution` gray image, row-major bytes.
pub fn synth_image(label: Label, index: usize, resolution: usize, seed: u64) -> Vec<u8> {
    let mut rng = Rng::new(seed).fork("synth").fork(label.name()).fork_index(index as u64);
    let base = 0.5 + rng.uniform_range(-BRIGHTNESS_JITTER, BRIGHTNESS_JITTER);
    let phase = rng.below(2) as usize;
    let theta = rng.uniform_range(0.0, std::f64::consts::TAU);
    let (ct, st) = (theta.cos(), theta.sin());
    let span = (resolution.max(2) - 1) as f64;
    let mut out = Vec::with_capacity(resolution * resolution);
    for y in 0..resolution {
        for x in 0..resolution {
            let checker = if (x + y + phase) % 2 == 0 {
                CHECKER_AMPLITUDE
            } else {
                -CHECKER_AMPLITUDE
            };
            let mut v = base + checker + NOISE_STD * rng.normal();
            if label == Label::Positive {
                let (u, w) = (2.0 * x as f64 / span - 1.0, 2.0 * y as f64 / span - 1.0);
                v += RAMP_AMPLITUDE * (u * ct + w * st);
            }
            out.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    out
}

/// Writes `n_per_class` images per class as binary PGM under
/// `dir/positive` and `dir/negative`, plus `dir/manifest.csv`.
pub fn synth_generate(dir: &Path, n_per_class: usize, resolution: usize, seed: u64) -> Result<Manifest> {
    if n_per_class == 0 {
        return Err(CectError::Validation(
            "synthetic set needs at least one image per class".into(),
        ));
    }
    if resolution == 0 {
        return Err(CectError::Validation("synthetic resolution must be positive".into()));
    }
    let mut records = Vec::new();
    for label in Label::ALL {
        let sub = dir.join(label.name());
        std::fs::create_dir_all(&sub).map_err(|e| CectError::io(&sub, e))?;
        for i in 0..n_per_class {
            let name = format!("{}_{i:04}.pgm", &label.name()[..3]);
            let path = sub.join(&name);
            let px = synth_image(label, i, resolution, seed);
            std::fs::write(&path, encode_pnm(resolution, resolution, 1, &px)).map_err(|e| CectError::io(&path, e))?;
            records.push(Record {
                source_id: format!("{}/{name}", label.name()),
                path,
                label,
            });
        }
    }
    let manifest = Manifest::from_records(records)?;
    manifest.write_csv(&dir.join("manifest.csv"))?;
    Ok(manifest)
}
