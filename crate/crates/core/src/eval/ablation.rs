use std::path::Path;

use serde::{Deserialize, Serialize};

use super::evaluate::Evaluation;
use super::experiment::{run_experiment, ExperimentData};
use crate::error::{CectError, Result};
use crate::model::{Architecture, Branch, CectConfig, EnsembleCoefficients, ScaleTag};
use crate::train::{EpochRecord, TrainConfig, TrainHistory};

/// Which blocks are present.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Blocks {
    pub ceb: bool,
    pub tdb: bool,
    pub tcb: bool,
}

/// One ablation configuration: blocks, captured scales (28, 56, 112, 224 at
/// reference resolution) and, when decoders are present, the coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationSpec {
    pub blocks: Blocks,
    pub scales: [bool; 4],
    pub coefficients: Option<EnsembleCoefficients>,
}

impl AblationSpec {
    /// The seven standard configurations.
    pub fn standard() -> Vec<AblationSpec> {
        let ceb_only = |b: Branch| {
            let mut scales = [false; 4];
            scales[b.scale() as usize] = true;
            AblationSpec {
                blocks: Blocks {
                    ceb: true,
                    tdb: false,
                    tcb: false,
                },
                scales,
                coefficients: None,
            }
        };
        let all = |scales, a, b, c| AblationSpec {
            blocks: Blocks {
                ceb: true,
                tdb: true,
                tcb: true,
            },
            scales,
            coefficients: Some(EnsembleCoefficients::new(a, b, c).expect("standard rows are valid")),
        };
        let third = 1.0 / 3.0;
        vec![
            ceb_only(Branch::Sd1),
            ceb_only(Branch::Sd2),
            ceb_only(Branch::Sd3),
            AblationSpec {
                blocks: Blocks {
                    ceb: false,
                    tdb: false,
                    tcb: true,
                },
                scales: [false, false, false, true],
                coefficients: None,
            },
            all([false, false, true, true], 0.0, 0.0, 1.0),
            all([false, true, true, true], 0.0, 0.5, 0.5),
            all([true, true, true, true], third, third, third),
        ]
    }

    /// Short row label such as `ceb+tdb+tcb`.
    pub fn label(&self) -> String {
        let b = self.blocks;
        let parts: Vec<&str> = [(b.ceb, "ceb"), (b.tdb, "tdb"), (b.tcb, "tcb")]
            .into_iter()
            .filter_map(|(on, n)| on.then_some(n))
            .collect();
        parts.join("+")
    }

    /// The network this row trains, derived from `base`.
    pub fn model_config(&self, base: &CectConfig) -> Result<CectConfig> {
        let Blocks { ceb, tdb, tcb } = self.blocks;
        let bad = |why: &str| Err(CectError::Validation(format!("ablation row {}: {why}", self.label())));
        let local: Vec<Branch> = Branch::ALL
            .into_iter()
            .filter(|b| self.scales[b.scale() as usize])
            .collect();
        let global = self.scales[ScaleTag::S224 as usize];
        let cfg = match (ceb, tdb, tcb) {
            (true, false, false) => {
                if self.coefficients.is_some() {
                    return bad("coefficients need decoders");
                }
                match (local.as_slice(), global) {
                    ([b], false) => CectConfig {
                        architecture: Architecture::EncoderOnly(*b),
                        coefficients: EnsembleCoefficients::only(*b),
                        enabled_branches: std::array::from_fn(|i| i == b.index()),
                        ..base.clone()
                    },
                    _ => return bad("an encoder-only row captures exactly one local scale"),
                }
            }
            (false, false, true) => {
                if self.coefficients.is_some() || !local.is_empty() || !global {
                    return bad("a transformer-only row captures only the global scale, without coefficients");
                }
                CectConfig {
                    architecture: Architecture::TransformerOnly,
                    ..base.clone()
                }
            }
            (true, true, true) => {
                let Some(c) = self.coefficients else {
                    return bad("the full pipeline needs coefficients");
                };
                if !global {
                    return bad("the transformer always captures the global scale");
                }
                for b in Branch::ALL {
                    if (c.get(b) > 0.0) != local.contains(&b) {
                        return bad("scales must be exactly the branches with non-zero coefficients");
                    }
                }
                CectConfig {
                    architecture: Architecture::Full,
                    coefficients: c,
                    enabled_branches: std::array::from_fn(|i| c.as_array()[i] > 0.0),
                    ..base.clone()
                }
            }
            _ => return bad("unsupported block combination (decoders need the encoder and the transformer)"),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub spec: AblationSpec,
    pub test: Option<Evaluation>,
    pub history: Option<TrainHistory>,
    pub error: Option<String>,
}

impl AblationRow {
    pub fn accuracy(&self) -> Option<f64> {
        self.test.as_ref().and_then(|t| t.metrics.acc)
    }
}

/// Trains and tests every row from the same seed. Rows are validated up
/// front; a row that fails during training keeps its error and the rest go on.
pub fn ablate(
    base: &CectConfig,
    train: &TrainConfig,
    data: &ExperimentData,
    specs: &[AblationSpec],
    out_dir: Option<&Path>,
    observer: &mut dyn FnMut(usize, &EpochRecord),
) -> Result<Vec<AblationRow>> {
    let configs = specs.iter().map(|s| s.model_config(base)).collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(specs.len());
    for (i, (spec, cfg)) in specs.iter().zip(configs).enumerate() {
        let dir = out_dir.map(|d| d.join(format!("row-{i}")));
        let row = match run_experiment(&cfg, train, data, dir.as_deref(), &mut |e| observer(i, e)) {
            Ok((_, r)) => AblationRow {
                spec: spec.clone(),
                test: Some(r.test),
                history: Some(r.history),
                error: None,
            },
            Err(e) => AblationRow {
                spec: spec.clone(),
                test: None,
                history: None,
                error: Some(e.to_string()),
            },
        };
        rows.push(row);
    }
    Ok(rows)
}
