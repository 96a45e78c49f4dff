use super::config::ScaleTag;
use crate::error::{CectError, Result};
use crate::tensor::{Graph, Real, Var};

/// A `[N, C, H, W]` graph value tagged with its semantic scale.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FeatureMap {
    pub var: Var,
    pub scale: ScaleTag,
    pub channels: usize,
}

impl FeatureMap {
    /// Checks that the spatial extent of `var` matches `scale` at
    /// `resolution`.
    pub fn new<T: Real>(g: &Graph<T>, var: Var, scale: ScaleTag, resolution: usize) -> Result<Self> {
        let shape = g.shape(var);
        let expected = scale.extent(resolution);
        match *shape {
            [_, c, h, w] if h == expected && w == expected => Ok(FeatureMap {
                var,
                scale,
                channels: c,
            }),
            _ => Err(CectError::dim(
                "feature map",
                format!("shape {shape:?} does not match scale {scale:?} ({expected}) at resolution {resolution}"),
            )),
        }
    }
}
