use serde::{Deserialize, Serialize};

use crate::error::{CectError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlateauConfig {
    pub factor: f64,
    pub patience: usize,
}

impl Default for PlateauConfig {
    fn default() -> Self {
        PlateauConfig {
            factor: 0.5,
            patience: 5,
        }
    }
}

impl PlateauConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.factor > 0.0 && self.factor < 1.0) {
            return Err(CectError::Config(format!(
                "plateau.factor = {} must lie in (0, 1)",
                self.factor
            )));
        }
        Ok(())
    }
}

/// Learning-rate reduction on a stalled monitored value (lower is better).
///
/// A value improves only if it is strictly below the best seen so far. Once
/// the number of consecutive non-improving epochs exceeds `patience`, the
/// rate is multiplied by `factor` and the count starts over.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plateau {
    pub config: PlateauConfig,
    pub lr: f64,
    pub best: Option<f64>,
    pub bad_epochs: usize,
    /// Whether the most recent value set a new best.
    pub improved: bool,
}

impl Plateau {
    pub fn new(config: PlateauConfig, lr: f64) -> Self {
        Plateau {
            config,
            lr,
            best: None,
            bad_epochs: 0,
            improved: false,
        }
    }

    /// Feeds one epoch's value and returns the rate for the next epoch.
    pub fn step(&mut self, value: f64) -> Result<f64> {
        if !value.is_finite() {
            return Err(CectError::Numeric(format!("monitored value {value} is not finite")));
        }
        self.improved = self.best.is_none_or(|b| value < b);
        if self.improved {
            self.best = Some(value);
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
            if self.bad_epochs > self.config.patience {
                self.lr *= self.config.factor;
                self.bad_epochs = 0;
            }
        }
        Ok(self.lr)
    }
}
