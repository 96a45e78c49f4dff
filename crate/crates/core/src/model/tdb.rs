//! Transposed-convolution decoder block and coefficient-weighted fusion.

use super::config::{Branch, CectConfig, EnsembleCoefficients, ScaleTag};
use super::feature::FeatureMap;
use super::params::Bound;
use crate::error::{CectError, Result};
use crate::tensor::{Graph, Real, Var};

/// Every decoder transposed convolution is 4×4, stride 2, padding 1.
pub const TCONV_STRIDE: usize = 2;
pub const TCONV_PAD: usize = 1;

fn tconv_bias<T: Real>(g: &mut Graph<T>, p: &Bound, prefix: &str, x: Var) -> Result<Var> {
    let w = p.get(&format!("{prefix}.weight"))?;
    let b = p.get(&format!("{prefix}.bias"))?;
    let y = g.conv_transpose2d(x, w, TCONV_STRIDE, TCONV_PAD)?;
    let c = g.shape(b)[0];
    let b3 = g.reshape(b, &[c, 1, 1])?;
    g.add(y, b3)
}

/// Decodes one encoder map back to full resolution.
///
/// SD1: upsample×2 → ReLU → tconv → ReLU → tconv.
/// SD2: tconv → ReLU → tconv.
/// SD3: tconv.
pub fn decoder_forward<T: Real>(
    g: &mut Graph<T>,
    p: &Bound,
    cfg: &CectConfig,
    input: FeatureMap,
    branch: Branch,
) -> Result<FeatureMap> {
    if input.scale != branch.scale() {
        return Err(CectError::dim(
            "tdb",
            format!(
                "{} expects {:?} input, got {:?}",
                branch.name(),
                branch.scale(),
                input.scale
            ),
        ));
    }
    let pre = format!("tdb.{}", branch.name());
    let mut x = input.var;
    match branch {
        Branch::Sd1 => {
            x = g.upsample_nearest(x, 2)?;
            x = g.relu(x)?;
            x = tconv_bias(g, p, &format!("{pre}.tconv1"), x)?;
            x = g.relu(x)?;
            x = tconv_bias(g, p, &format!("{pre}.tconv2"), x)?;
        }
        Branch::Sd2 => {
            x = tconv_bias(g, p, &format!("{pre}.tconv1"), x)?;
            x = g.relu(x)?;
            x = tconv_bias(g, p, &format!("{pre}.tconv2"), x)?;
        }
        Branch::Sd3 => {
            x = tconv_bias(g, p, &format!("{pre}.tconv1"), x)?;
        }
    }
    FeatureMap::new(g, x, ScaleTag::S224, cfg.input_resolution)
}

/// `y = α·SD1 + β·SD2 + γ·SD3` over the raw decoder outputs. Branches with a
/// zero coefficient are not evaluated.
pub fn fuse<T: Real>(g: &mut Graph<T>, decoded: &[(Branch, FeatureMap)], coeffs: &EnsembleCoefficients) -> Result<Var> {
    let mut acc: Option<Var> = None;
    for &(b, fm) in decoded {
        let c = coeffs.get(b);
        if c == 0.0 {
            continue;
        }
        let term = g.scale(fm.var, T::of(c))?;
        acc = Some(match acc {
            None => term,
            Some(a) => g.add(a, term)?,
        });
    }
    acc.ok_or_else(|| CectError::Validation("fusion has no branch with a nonzero coefficient".into()))
}

/// Decodes every available encoder output and fuses them.
pub fn tdb_forward<T: Real>(
    g: &mut Graph<T>,
    p: &Bound,
    cfg: &CectConfig,
    encoded: &[Option<FeatureMap>; 3],
    coeffs: &EnsembleCoefficients,
) -> Result<FeatureMap> {
    // Re-validate so hand-built coefficient values cannot slip through.
    EnsembleCoefficients::new(coeffs.alpha(), coeffs.beta(), coeffs.gamma())?;
    let mut decoded = Vec::new();
    for b in Branch::ALL {
        if coeffs.get(b) == 0.0 {
            continue;
        }
        let fm = encoded[b.index()].ok_or_else(|| {
            CectError::Validation(format!(
                "coefficient for {} is nonzero but the branch is absent",
                b.name()
            ))
        })?;
        decoded.push((b, decoder_forward(g, p, cfg, fm, b)?));
    }
    let fused = fuse(g, &decoded, coeffs)?;
    FeatureMap::new(g, fused, ScaleTag::S224, cfg.input_resolution)
}
