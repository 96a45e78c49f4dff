use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{CectError, Result};
use crate::model::ParamStore;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, b) in [("adam.beta1", self.beta1), ("adam.beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(CectError::Config(format!("{name} = {b} must lie in [0, 1)")));
            }
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(CectError::Config(format!("adam.eps = {} must be positive", self.eps)));
        }
        Ok(())
    }
}

/// Bias-corrected Adam. Moments are kept per parameter name in `f32`, the
/// update itself is computed in `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    config: AdamConfig,
    step: u64,
    m: BTreeMap<String, Tensor>,
    v: BTreeMap<String, Tensor>,
}

/// Checkpoint record prefixes for the two moment buffers.
pub const FIRST_MOMENT_PREFIX: &str = "opt.m.";
pub const SECOND_MOMENT_PREFIX: &str = "opt.v.";

impl Adam {
    pub fn new(config: AdamConfig, params: &ParamStore) -> Self {
        let zeros = || {
            params
                .iter()
                .map(|(k, t)| (k.clone(), Tensor::zeros(t.shape())))
                .collect()
        };
        Adam {
            config,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update. Parameters without an entry in `grads` are left
    /// alone, moments included.
    pub fn step(&mut self, params: &mut ParamStore, grads: &BTreeMap<String, Tensor>, lr: f64) -> Result<()> {
        for (name, g) in grads {
            let p = params
                .get(name)
                .ok_or_else(|| CectError::Contract(format!("gradient for unknown parameter `{name}`")))?;
            if p.shape() != g.shape() {
                return Err(CectError::ShapeMismatch {
                    op: "adam",
                    left: p.shape().to_vec(),
                    right: g.shape().to_vec(),
                });
            }
        }
        self.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (name, g) in grads {
            let p = params.get_mut(name).expect("checked above");
            let m = self.m.get_mut(name).expect("moments mirror parameters");
            let v = self.v.get_mut(name).expect("moments mirror parameters");
            let (pd, md, vd) = (p.data_mut(), m.data_mut(), v.data_mut());
            for (i, &gi) in g.data().iter().enumerate() {
                let gi = f64::from(gi);
                let mi = beta1 * f64::from(md[i]) + (1.0 - beta1) * gi;
                let vi = beta2 * f64::from(vd[i]) + (1.0 - beta2) * gi * gi;
                md[i] = mi as f32;
                vd[i] = vi as f32;
                let update = lr * (mi / c1) / ((vi / c2).sqrt() + eps);
                pd[i] = (f64::from(pd[i]) - update) as f32;
            }
        }
        Ok(())
    }

    /// Moment buffers as named checkpoint records.
    pub fn records(&self) -> Vec<(String, &Tensor)> {
        let m = self.m.iter().map(|(k, t)| (format!("{FIRST_MOMENT_PREFIX}{k}"), t));
        let v = self.v.iter().map(|(k, t)| (format!("{SECOND_MOMENT_PREFIX}{k}"), t));
        m.chain(v).collect()
    }

    /// Rebuilds the optimizer from checkpoint records.
    pub fn restore(
        config: AdamConfig,
        step: u64,
        params: &ParamStore,
        records: &BTreeMap<String, Tensor>,
    ) -> Result<Self> {
        let mut out = Adam::new(config, params);
        out.step = step;
        for (prefix, bufs) in [(FIRST_MOMENT_PREFIX, &mut out.m), (SECOND_MOMENT_PREFIX, &mut out.v)] {
            for (name, buf) in bufs.iter_mut() {
                let key = format!("{prefix}{name}");
                let t = records
                    .get(&key)
                    .ok_or_else(|| CectError::Checkpoint(format!("missing optimizer record `{key}`")))?;
                if t.shape() != buf.shape() {
                    return Err(CectError::Checkpoint(format!(
                        "optimizer record `{key}` has shape {:?}",
                        t.shape()
                    )));
                }
                *buf = t.clone();
            }
        }
        Ok(out)
    }
}
