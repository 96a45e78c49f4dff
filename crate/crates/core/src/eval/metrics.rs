use serde::{Deserialize, Serialize};

use super::confusion::ConfusionMatrix;
use crate::error::{CectError, Result};

/// The six classification ratios. A metric whose denominator is zero is
/// `None`, never `0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub acc: Option<f64>,
    pub npv: Option<f64>,
    pub ppv: Option<f64>,
    pub sen: Option<f64>,
    pub spe: Option<f64>,
    pub fos: Option<f64>,
}

impl MetricsReport {
    pub const NAMES: [&'static str; 6] = ["ACC", "NPV", "PPV", "SEN", "SPE", "FOS"];

    pub fn values(&self) -> [Option<f64>; 6] {
        [self.acc, self.npv, self.ppv, self.sen, self.spe, self.fos]
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn metrics(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    if cm.total() == 0 {
        return Err(CectError::Contract("metrics of an empty confusion matrix".into()));
    }
    let ConfusionMatrix { tp, fp, fn_, tn } = *cm;
    Ok(MetricsReport {
        acc: ratio(tp + tn, cm.total()),
        npv: ratio(tn, tn + fn_),
        ppv: ratio(tp, tp + fp),
        sen: ratio(tp, tp + fn_),
        spe: ratio(tn, tn + fp),
        fos: ratio(2 * tp, 2 * tp + fn_ + fp),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn undefined_is_distinct_from_zero() {
        let m = metrics(&ConfusionMatrix::new(0, 0, 0, 4)).unwrap();
        assert_eq!(m.acc, Some(1.0));
        assert_eq!(m.ppv, None);
        assert_eq!(m.sen, None);
        assert_eq!(m.fos, None);
        let m = metrics(&ConfusionMatrix::new(0, 3, 0, 1)).unwrap();
        assert_eq!(m.ppv, Some(0.0));
        assert!(metrics(&ConfusionMatrix::default()).is_err());
    }
}
