use serde::{Deserialize, Serialize};

use super::confusion::{confusion_from_logits, ConfusionMatrix};
use super::metrics::{metrics, MetricsReport};
use crate::data::{Dataset, Normalization};
use crate::error::{CectError, Result};
use crate::model::Cect;
use crate::tensor::Tensor;

/// Loss, confusion counts and metrics of a model on one subset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub samples: usize,
    pub loss: f64,
    pub confusion: ConfusionMatrix,
    pub metrics: MetricsReport,
}

/// Mean cross-entropy of `[N, 2]` logits, accumulated in `f64`.
pub fn mean_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<f64> {
    let n = labels.len();
    if logits.shape() != [n, 2] || n == 0 {
        return Err(CectError::Contract(format!(
            "cross-entropy of logits {:?} against {n} labels",
            logits.shape()
        )));
    }
    let mut total = 0.0;
    for (row, &y) in logits.data().chunks_exact(2).zip(labels) {
        if y > 1 {
            return Err(CectError::Contract(format!("label {y} out of range for 2 classes")));
        }
        let (a, b) = (f64::from(row[0]), f64::from(row[1]));
        let m = a.max(b);
        let lse = m + ((a - m).exp() + (b - m).exp()).ln();
        total += lse - if y == 0 { a } else { b };
    }
    Ok(total / n as f64)
}

pub fn evaluate_logits(logits: &Tensor, labels: &[usize]) -> Result<Evaluation> {
    let confusion = confusion_from_logits(logits, labels)?;
    Ok(Evaluation {
        samples: labels.len(),
        loss: mean_cross_entropy(logits, labels)?,
        confusion,
        metrics: metrics(&confusion)?,
    })
}

/// Runs the model over every sample of `data` without augmentation.
pub fn evaluate(model: &Cect, data: &Dataset, norm: &Normalization) -> Result<Evaluation> {
    if data.is_empty() {
        return Err(CectError::Contract("evaluation on an empty dataset".into()));
    }
    let (x, labels) = data.all(norm);
    let logits = model.logits(&x)?;
    let out = evaluate_logits(&logits, &labels)?;
    if !out.loss.is_finite() {
        return Err(CectError::Numeric(format!("evaluation loss is {}", out.loss)));
    }
    Ok(out)
}
