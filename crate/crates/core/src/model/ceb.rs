//! Convolutional encoder block: three independent sub-encoders with output
//! strides 8, 4 and 2.

use super::config::{Branch, CectConfig};
use super::feature::FeatureMap;
use super::params::{encoder_prefix, Bound};
use crate::error::{CectError, Result};
use crate::tensor::{Graph, Real, Var};

pub(crate) fn conv_bias<T: Real>(
    g: &mut Graph<T>,
    p: &Bound,
    prefix: &str,
    x: Var,
    stride: usize,
    pad: usize,
) -> Result<Var> {
    let w = p.get(&format!("{prefix}.weight"))?;
    let b = p.get(&format!("{prefix}.bias"))?;
    let y = g.conv2d(x, w, stride, pad)?;
    let c = g.shape(b)[0];
    let b4 = g.reshape(b, &[c, 1, 1])?;
    g.add(y, b4)
}

/// One sub-encoder. Each stage is conv3×3 → ReLU → conv3×3/2 → ReLU.
pub fn encoder_forward<T: Real>(
    g: &mut Graph<T>,
    p: &Bound,
    cfg: &CectConfig,
    image: Var,
    branch: Branch,
) -> Result<FeatureMap> {
    let pre = encoder_prefix(branch);
    let mut x = image;
    for stage in 0..branch.encoder_stages() {
        x = conv_bias(g, p, &format!("{pre}.s{stage}.conv1"), x, 1, 1)?;
        x = g.relu(x)?;
        x = conv_bias(g, p, &format!("{pre}.s{stage}.conv2"), x, 2, 1)?;
        x = g.relu(x)?;
    }
    FeatureMap::new(g, x, branch.scale(), cfg.input_resolution)
}

pub(crate) fn check_image<T: Real>(g: &Graph<T>, cfg: &CectConfig, image: Var) -> Result<()> {
    let r = cfg.input_resolution;
    if r % 8 != 0 {
        return Err(CectError::Config(format!("resolution {r} is not divisible by 8")));
    }
    match *g.shape(image) {
        [_, c, h, w] if c == cfg.input_channels && h == r && w == r => Ok(()),
        ref s => Err(CectError::dim(
            "cect",
            format!("expected [N, {}, {r}, {r}] input, got {s:?}", cfg.input_channels),
        )),
    }
}

/// Encoder outputs indexed by branch; inactive branches are `None`.
pub fn ceb_forward<T: Real>(
    g: &mut Graph<T>,
    p: &Bound,
    cfg: &CectConfig,
    image: Var,
) -> Result<[Option<FeatureMap>; 3]> {
    check_image(g, cfg, image)?;
    let mut out = [None, None, None];
    for b in cfg.active_branches() {
        out[b.index()] = Some(encoder_forward(g, p, cfg, image, b)?);
    }
    Ok(out)
}
