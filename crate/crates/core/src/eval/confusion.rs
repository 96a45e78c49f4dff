use serde::{Deserialize, Serialize};

use crate::error::{CectError, Result};
use crate::tensor::Tensor;

/// Binary confusion counts with class 1 as positive.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        ConfusionMatrix { tp, fp, fn_, tn }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> u64 {
        self.tn + self.fp
    }

    pub fn misclassified(&self) -> u64 {
        self.fp + self.fn_
    }
}

/// Class index per row of `[N, 2]` logits. A tie goes to the negative class.
pub fn predict(logits: &Tensor) -> Result<Vec<usize>> {
    match logits.shape() {
        [_, 2] => Ok(logits
            .data()
            .chunks_exact(2)
            .map(|r| usize::from(r[1] > r[0]))
            .collect()),
        s => Err(CectError::dim("predict", format!("expected [N, 2] logits, got {s:?}"))),
    }
}

/// Counts predictions against labels, both in `{0, 1}`.
pub fn confusion(predictions: &[usize], labels: &[usize]) -> Result<ConfusionMatrix> {
    if predictions.len() != labels.len() {
        return Err(CectError::Contract(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut cm = ConfusionMatrix::default();
    for (i, (&p, &y)) in predictions.iter().zip(labels).enumerate() {
        match (p, y) {
            (1, 1) => cm.tp += 1,
            (1, 0) => cm.fp += 1,
            (0, 1) => cm.fn_ += 1,
            (0, 0) => cm.tn += 1,
            _ => {
                return Err(CectError::Contract(format!(
                    "entry {i}: prediction {p} / label {y} is not binary"
                )))
            }
        }
    }
    Ok(cm)
}

pub fn confusion_from_logits(logits: &Tensor, labels: &[usize]) -> Result<ConfusionMatrix> {
    confusion(&predict(logits)?, labels)
}
