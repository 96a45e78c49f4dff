use super::ceb::{ceb_forward, check_image, encoder_forward};
use super::config::{Architecture, CectConfig};
use super::params::{init_params, Bound, ParamStore};
use super::swin::{head, tcb_features};
use super::tdb::tdb_forward;
use crate::error::{CectError, Result};
use crate::par;
use crate::tensor::{Graph, Real, Tensor, Var};

/// Graph handles for one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct Forward {
    /// `[N, 2]`.
    pub logits: Var,
    /// Representation feeding the head, `[N, penultimate_width]`.
    pub penultimate: Var,
}

/// Builds the network described by `cfg` on `g`.
pub fn forward<T: Real>(g: &mut Graph<T>, p: &Bound, cfg: &CectConfig, image: Var) -> Result<Forward> {
    check_image(g, cfg, image)?;
    let penultimate = match cfg.architecture {
        Architecture::Full => {
            let encoded = ceb_forward(g, p, cfg, image)?;
            let fused = tdb_forward(g, p, cfg, &encoded, &cfg.coefficients)?;
            tcb_features(g, p, cfg, fused.var)?
        }
        Architecture::TransformerOnly => tcb_features(g, p, cfg, image)?,
        Architecture::EncoderOnly(branch) => {
            let fm = encoder_forward(g, p, cfg, image, branch)?;
            let [n, c, h, w] = match *g.shape(fm.var) {
                [n, c, h, w] => [n, c, h, w],
                _ => unreachable!("feature maps are rank 4"),
            };
            let flat = g.reshape(fm.var, &[n, c, h * w])?;
            g.mean_axis(flat, 2)?
        }
    };
    let logits = head(g, p, penultimate)?;
    Ok(Forward { logits, penultimate })
}

/// Forward pass outputs copied out of the graph.
#[derive(Clone, Debug, PartialEq)]
pub struct Inference {
    pub logits: Tensor,
    pub penultimate: Tensor,
}

/// A configuration together with its parameters.
#[derive(Clone, Debug)]
pub struct Cect {
    config: CectConfig,
    params: ParamStore,
}

/// Images per worker graph during batched inference.
const INFERENCE_CHUNK: usize = 4;

impl Cect {
    /// Validated config with freshly initialized parameters.
    pub fn new(config: CectConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let params = init_params(&config, seed);
        Ok(Cect { config, params })
    }

    /// Pairs `params` with `config` after checking names and shapes.
    pub fn from_params(config: CectConfig, params: ParamStore) -> Result<Self> {
        config.validate()?;
        init_params(&config, 0).check_layout(&params)?;
        params.check_layout(&init_params(&config, 0))?;
        Ok(Cect { config, params })
    }

    pub fn config(&self) -> &CectConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn into_params(self) -> ParamStore {
        self.params
    }

    /// Logits and penultimate features for a `[N, C, R, R]` batch. Chunks of
    /// the batch run on separate graphs in parallel; the result does not
    /// depend on the thread count.
    pub fn infer(&self, images: &Tensor) -> Result<Inference> {
        let shape = images.shape().to_vec();
        let n = match shape[..] {
            [n, _, _, _] if n > 0 => n,
            _ => {
                return Err(CectError::dim(
                    "infer",
                    format!("expected a non-empty [N, C, R, R] batch, got {shape:?}"),
                ))
            }
        };
        let per = images.numel() / n;
        let chunks = n.div_ceil(INFERENCE_CHUNK);
        let parts = par::map_range(chunks, |c| -> Result<(Vec<f32>, Vec<f32>)> {
            let lo = c * INFERENCE_CHUNK;
            let hi = (lo + INFERENCE_CHUNK).min(n);
            let mut s = shape.clone();
            s[0] = hi - lo;
            let x = Tensor::new(s, images.data()[lo * per..hi * per].to_vec())?;
            let mut g = Graph::new();
            let p = self.params.bind(&mut g, false);
            let xv = g.input(x);
            let out = forward(&mut g, &p, &self.config, xv)?;
            g.check_finite()?;
            Ok((g.value(out.logits).to_vec(), g.value(out.penultimate).to_vec()))
        });
        let width = self.config.penultimate_width();
        let mut logits = Vec::with_capacity(2 * n);
        let mut pen = Vec::with_capacity(width * n);
        for part in parts {
            let (l, f) = part?;
            logits.extend(l);
            pen.extend(f);
        }
        Ok(Inference {
            logits: Tensor::new(vec![n, 2], logits)?,
            penultimate: Tensor::new(vec![n, width], pen)?,
        })
    }

    pub fn logits(&self, images: &Tensor) -> Result<Tensor> {
        Ok(self.infer(images)?.logits)
    }

    pub fn extract_penultimate(&self, images: &Tensor) -> Result<Tensor> {
        Ok(self.infer(images)?.penultimate)
    }
}

/// Full forward pass on a fresh graph with frozen parameters.
pub fn cect_forward<T: Real>(image: &Tensor<T>, cfg: &CectConfig, params: &ParamStore<T>) -> Result<Tensor<T>> {
    let mut g = Graph::new();
    let p = params.bind(&mut g, false);
    let x = g.input(image.clone());
    let out = forward(&mut g, &p, cfg, x)?;
    Ok(g.value(out.logits).clone())
}

/// Pooled representation ahead of the head.
pub fn extract_penultimate<T: Real>(image: &Tensor<T>, cfg: &CectConfig, params: &ParamStore<T>) -> Result<Tensor<T>> {
    let mut g = Graph::new();
    let p = params.bind(&mut g, false);
    let x = g.input(image.clone());
    let out = forward(&mut g, &p, cfg, x)?;
    Ok(g.value(out.penultimate).clone())
}
