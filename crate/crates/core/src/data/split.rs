//! Stratified, seeded train/validation/test division.

use serde::{Deserialize, Serialize};

use super::manifest::{Label, Manifest, Record};
use crate::error::{CectError, Result};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitMode {
    /// Train, validation and test all carved from one manifest.
    ThreeWay,
    /// Train and validation carved out; the test set comes separately.
    TwoWayExternalTest,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    /// `(train, val, test)`; `test` is 0 in two-way mode.
    pub ratios: (f64, f64, f64),
    pub seed: u64,
    pub mode: SplitMode,
}

impl SplitSpec {
    pub fn three_way(train: f64, val: f64, test: f64, seed: u64) -> Result<Self> {
        let s = SplitSpec {
            ratios: (train, val, test),
            seed,
            mode: SplitMode::ThreeWay,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn two_way(train: f64, val: f64, seed: u64) -> Result<Self> {
        let s = SplitSpec {
            ratios: (train, val, 0.0),
            seed,
            mode: SplitMode::TwoWayExternalTest,
        };
        s.validate()?;
        Ok(s)
    }

    /// The 8:1:1 division.
    pub fn standard(seed: u64) -> Self {
        SplitSpec {
            ratios: (0.8, 0.1, 0.1),
            seed,
            mode: SplitMode::ThreeWay,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (a, b, c) = self.ratios;
        let positive = match self.mode {
            SplitMode::ThreeWay => a > 0.0 && b > 0.0 && c > 0.0,
            SplitMode::TwoWayExternalTest => a > 0.0 && b > 0.0 && c == 0.0,
        };
        if !positive || ((a + b + c) - 1.0).abs() > 1e-9 {
            return Err(CectError::Split(format!(
                "ratios ({a}, {b}, {c}) must be positive and sum to 1 for {:?}",
                self.mode
            )));
        }
        Ok(())
    }

    fn parts(&self) -> usize {
        match self.mode {
            SplitMode::ThreeWay => 3,
            SplitMode::TwoWayExternalTest => 2,
        }
    }
}

/// `(train, val, test)` sizes for a class of `n`: validation and test get
/// `round(n·r)` (at least one each), training keeps the remainder.
pub fn split_counts(n: usize, spec: &SplitSpec) -> Result<(usize, usize, usize)> {
    spec.validate()?;
    let parts = spec.parts();
    if n < parts {
        return Err(CectError::Split(format!(
            "a class with {n} samples cannot fill {parts} parts"
        )));
    }
    let take = |r: f64| {
        if r > 0.0 {
            ((n as f64 * r).round() as usize).max(1)
        } else {
            0
        }
    };
    let (mut val, mut test) = (take(spec.ratios.1), take(spec.ratios.2));
    while val + test >= n {
        if test > val {
            test -= 1;
        } else {
            val -= 1;
        }
    }
    Ok((n - val - test, val, test))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Manifest,
    pub val: Manifest,
    pub test: Manifest,
}

/// Per-class shuffle (seeded by class) followed by contiguous cuts. Two-way
/// mode takes `external_test` as the test part.
pub fn split(manifest: &Manifest, spec: &SplitSpec, external_test: Option<Manifest>) -> Result<Splits> {
    spec.validate()?;
    match (spec.mode, &external_test) {
        (SplitMode::TwoWayExternalTest, None) => {
            return Err(CectError::Split("two-way mode needs an external test manifest".into()))
        }
        (SplitMode::ThreeWay, Some(_)) => {
            return Err(CectError::Split(
                "three-way mode does not take an external test manifest".into(),
            ))
        }
        _ => {}
    }
    let root = Rng::new(spec.seed).fork("split");
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for label in Label::ALL {
        let mut class: Vec<Record> = manifest
            .records()
            .iter()
            .filter(|r| r.label == label)
            .cloned()
            .collect();
        let (a, b, _) =
            split_counts(class.len(), spec).map_err(|e| CectError::Split(format!("class `{label}`: {e}")))?;
        root.fork(label.name()).shuffle(&mut class);
        let rest = class.split_off(a);
        train.extend(class);
        let mut rest = rest;
        let tail = rest.split_off(b);
        val.extend(rest);
        test.extend(tail);
    }
    let test = match external_test {
        Some(m) => m,
        None => Manifest::from_records(test)?,
    };
    Ok(Splits {
        train: Manifest::from_records(train)?,
        val: Manifest::from_records(val)?,
        test,
    })
}
