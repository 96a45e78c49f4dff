//! Finite-difference verification of the whole network.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::CectConfig;
use super::net::forward;
use super::params::{init_params, Bound};
use crate::error::Result;
use crate::rng::Rng;
use crate::tensor::gradcheck::{grad_check_at, GradCheckReport};
use crate::tensor::Tensor;

/// Attempts at replacing coordinates that straddle a ReLU kink.
const RESAMPLE_ROUNDS: usize = 5;

/// Knobs for [`model_grad_check`].
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ModelGradCheckConfig {
    pub draws: usize,
    pub batch: usize,
    /// Sampled coordinates per parameter tensor.
    pub coords_per_param: usize,
    pub input_coords: usize,
    pub eps: f64,
    pub tol: f64,
    /// Std of the noise added to initial parameters so that zero-initialized
    /// biases are exercised away from zero.
    pub jitter: f64,
}

impl Default for ModelGradCheckConfig {
    fn default() -> Self {
        ModelGradCheckConfig {
            draws: 3,
            batch: 2,
            coords_per_param: 1,
            input_coords: 8,
            eps: 1e-5,
            tol: 1e-3,
            jitter: 0.05,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ModelGradCheck {
    pub draws: Vec<GradCheckReport>,
    /// Name of the worst coordinate's tensor in each draw.
    pub worst_tensor: Vec<String>,
    pub max_rel_err: f64,
    pub passed: bool,
}

/// Cross-entropy loss of the full network against central differences, in
/// 64-bit precision, over random parameter and input draws.
pub fn model_grad_check(cfg: &CectConfig, seed: u64, opts: &ModelGradCheckConfig) -> Result<ModelGradCheck> {
    cfg.validate()?;
    let root = Rng::new(seed).fork("gradcheck");
    let r = cfg.input_resolution;
    let labels: Vec<usize> = (0..opts.batch).map(|i| i % 2).collect();
    let mut out = ModelGradCheck {
        draws: Vec::new(),
        worst_tensor: Vec::new(),
        max_rel_err: 0.0,
        passed: true,
    };
    for draw in 0..opts.draws {
        let mut rng = root.fork_index(draw as u64);
        let params = init_params(cfg, rng.next_u64()).cast::<f64>();
        let mut names = vec!["input".to_string()];
        let mut inputs = vec![Tensor::<f64>::uniform(
            &[opts.batch, cfg.input_channels, r, r],
            1.0,
            &mut rng,
        )];
        for (name, t) in params.iter() {
            let noise = Tensor::<f64>::normal(t.shape(), opts.jitter, &mut rng);
            let data = t.data().iter().zip(noise.data()).map(|(a, b)| a + b).collect();
            names.push(name.clone());
            inputs.push(Tensor::new(t.shape().to_vec(), data)?);
        }
        let mut coords = Vec::new();
        for _ in 0..opts.input_coords {
            coords.push((0, rng.below(inputs[0].numel() as u64) as usize));
        }
        for (i, t) in inputs.iter().enumerate().skip(1) {
            for _ in 0..opts.coords_per_param {
                coords.push((i, rng.below(t.numel() as u64) as usize));
            }
        }
        let f = |g: &mut crate::tensor::Graph<f64>, vars: &[crate::tensor::Var]| {
            let bound = Bound::from_vars(
                names[1..]
                    .iter()
                    .cloned()
                    .zip(vars[1..].iter().copied())
                    .collect::<BTreeMap<_, _>>(),
            );
            let fwd = forward(g, &bound, cfg, vars[0])?;
            g.cross_entropy(fwd.logits, &labels)
        };
        let mut report = grad_check_at(f, &inputs, &coords, opts.eps, opts.tol)?;
        // Coordinates sitting next to a ReLU kink are redrawn from the same
        // tensor so every tensor keeps its quota of checked coordinates.
        for _ in 0..RESAMPLE_ROUNDS {
            if report.skipped.is_empty() {
                break;
            }
            let retry: Vec<_> = report
                .skipped
                .iter()
                .map(|&(i, _)| (i, rng.below(inputs[i].numel() as u64) as usize))
                .collect();
            let again = grad_check_at(f, &inputs, &retry, opts.eps, opts.tol)?;
            if again.max_rel_err > report.max_rel_err || report.worst.is_none() {
                report.max_rel_err = again.max_rel_err;
                report.worst = again.worst;
            }
            report.checked += again.checked;
            report.skipped = again.skipped;
        }
        report.passed = report.max_rel_err < opts.tol;
        out.max_rel_err = out.max_rel_err.max(report.max_rel_err);
        out.passed &= report.passed;
        out.worst_tensor
            .push(report.worst.map(|(i, _)| names[i].clone()).unwrap_or_default());
        out.draws.push(report);
    }
    Ok(out)
}
