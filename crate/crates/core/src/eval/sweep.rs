use std::path::Path;

use serde::{Deserialize, Serialize};

use super::evaluate::Evaluation;
use super::experiment::{run_experiment, ExperimentData};
use crate::error::{CectError, Result};
use crate::model::{CectConfig, EnsembleCoefficients};
use crate::train::{EpochRecord, TrainConfig};

/// Values a coefficient may take in the standard sweep.
pub const COEFFICIENT_CHOICES: [f64; 5] = [0.1, 0.2, 1.0 / 3.0, 0.6, 0.8];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub groups: Vec<EnsembleCoefficients>,
}

impl Default for SweepSpec {
    /// The seven standard groups.
    fn default() -> Self {
        let g = |a, b, c| EnsembleCoefficients::new(a, b, c).expect("standard groups are valid");
        let third = 1.0 / 3.0;
        SweepSpec {
            groups: vec![
                g(0.8, 0.1, 0.1),
                g(0.6, 0.2, 0.2),
                g(0.1, 0.8, 0.1),
                g(0.2, 0.6, 0.2),
                g(0.1, 0.1, 0.8),
                g(0.2, 0.2, 0.6),
                g(third, third, third),
            ],
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.groups.is_empty() {
            return Err(CectError::Validation(
                "sweep needs at least one coefficient group".into(),
            ));
        }
        for c in &self.groups {
            EnsembleCoefficients::new(c.alpha(), c.beta(), c.gamma())?;
        }
        Ok(())
    }
}

/// Whether every coefficient comes from [`COEFFICIENT_CHOICES`] and at
/// least two of them are equal.
pub fn in_constraint_set(c: &EnsembleCoefficients) -> bool {
    let v = c.as_array();
    let allowed = v
        .iter()
        .all(|x| COEFFICIENT_CHOICES.iter().any(|a| (a - x).abs() < 1e-12));
    let shared = v[0] == v[1] || v[1] == v[2] || v[0] == v[2];
    allowed && shared
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub coefficients: EnsembleCoefficients,
    pub test: Option<Evaluation>,
    pub final_train_loss: Option<f64>,
    pub best_val_loss: Option<f64>,
    /// Set when this group failed; the other rows are still reported.
    pub error: Option<String>,
}

/// Trains and tests one model per coefficient group, all from the same seed.
/// Group `i` writes its checkpoints to `out_dir/group-<i>`.
pub fn sweep(
    model: &CectConfig,
    train: &TrainConfig,
    data: &ExperimentData,
    spec: &SweepSpec,
    out_dir: Option<&Path>,
    observer: &mut dyn FnMut(usize, &EpochRecord),
) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let mut rows = Vec::with_capacity(spec.groups.len());
    for (i, &c) in spec.groups.iter().enumerate() {
        let cfg = model.clone().with_coefficients(c);
        let dir = out_dir.map(|d| d.join(format!("group-{i}")));
        let row = match run_experiment(&cfg, train, data, dir.as_deref(), &mut |e| observer(i, e)) {
            Ok((_, r)) => SweepRow {
                coefficients: c,
                final_train_loss: r.history.epochs.last().map(|e| e.train_loss),
                best_val_loss: r.history.best_val_loss,
                test: Some(r.test),
                error: None,
            },
            Err(e) => SweepRow {
                coefficients: c,
                test: None,
                final_train_loss: None,
                best_val_loss: None,
                error: Some(e.to_string()),
            },
        };
        rows.push(row);
    }
    Ok(rows)
}
