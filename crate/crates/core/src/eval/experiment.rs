use std::path::Path;

use serde::{Deserialize, Serialize};

use super::evaluate::{evaluate, Evaluation};
use crate::data::Dataset;
use crate::error::Result;
use crate::model::{Cect, CectConfig};
use crate::rng::Rng;
use crate::train::{fit, EpochRecord, TrainConfig, TrainHistory};

/// The three subsets an experiment trains, selects and reports on.
#[derive(Clone, Debug)]
pub struct ExperimentData {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub history: TrainHistory,
    /// Best-validation parameters evaluated on the test subset.
    pub test: Evaluation,
}

/// Parameter-initialization seed derived from a run seed.
pub fn init_seed(seed: u64) -> u64 {
    Rng::new(seed).fork("init").next_u64()
}

/// Builds, trains and tests one model. Every harness goes through here, so
/// equal configurations and seeds give equal results wherever they run.
pub fn run_experiment(
    model: &CectConfig,
    train: &TrainConfig,
    data: &ExperimentData,
    run_dir: Option<&Path>,
    observer: &mut dyn FnMut(&EpochRecord),
) -> Result<(Cect, ExperimentResult)> {
    let net = Cect::new(model.clone(), init_seed(train.seed))?;
    let out = fit(net, &data.train, &data.val, train, run_dir, observer)?;
    let test = evaluate(&out.best, &data.test, &train.normalization)?;
    Ok((
        out.best,
        ExperimentResult {
            history: out.history,
            test,
        },
    ))
}
