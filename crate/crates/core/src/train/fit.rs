use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamConfig, FIRST_MOMENT_PREFIX, SECOND_MOMENT_PREFIX};
use super::plateau::{Plateau, PlateauConfig};
use crate::data::{AugmentConfig, AugmentPlan, Dataset, Normalization};
use crate::error::{CectError, Result};
use crate::eval::{evaluate, ConfusionMatrix, MetricsReport};
use crate::model::checkpoint;
use crate::model::{forward, Cect, CectConfig, ParamStore};
use crate::par;
use crate::rng::Rng;
use crate::tensor::{Graph, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub initial_lr: f64,
    pub batch_size: usize,
    pub plateau: PlateauConfig,
    pub adam: AdamConfig,
    pub seed: u64,
    /// `None` trains on the preprocessed images as they are.
    pub augment: Option<AugmentConfig>,
    pub normalization: Normalization,
    /// Stops after this many optimizer steps, even mid-epoch.
    pub max_steps: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            initial_lr: 0.003,
            batch_size: 64,
            plateau: PlateauConfig::default(),
            adam: AdamConfig::default(),
            seed: 0,
            augment: Some(AugmentConfig::default()),
            normalization: Normalization::default(),
            max_steps: None,
        }
    }
}

impl TrainConfig {
    /// Desk-scale schedule for the `tiny` and `micro` networks. Narrow
    /// randomly initialized networks lose all input dependence at the
    /// reference rate, so this one is lower.
    pub fn tiny() -> Self {
        TrainConfig {
            initial_lr: 3e-4,
            batch_size: 8,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(CectError::Config("epochs must be at least 1".into()));
        }
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return Err(CectError::Config(format!(
                "initial_lr = {} must be positive",
                self.initial_lr
            )));
        }
        if self.batch_size == 0 {
            return Err(CectError::Config("batch_size must be at least 1".into()));
        }
        if self.max_steps == Some(0) {
            return Err(CectError::Config("max_steps must be at least 1".into()));
        }
        self.plateau.validate()?;
        self.adam.validate()?;
        self.normalization.validate()?;
        if let Some(a) = &self.augment {
            a.validate()?;
        }
        Ok(())
    }

    /// Equal up to the run length, which a resumed run may extend.
    fn same_run(&self, other: &TrainConfig) -> bool {
        let strip = |c: &TrainConfig| TrainConfig {
            epochs: 0,
            max_steps: None,
            ..c.clone()
        };
        strip(self) == strip(other)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// Zero-based.
    pub epoch: usize,
    /// Optimizer steps completed by the end of this epoch.
    pub steps: usize,
    /// Rate used for every step of this epoch.
    pub lr: f64,
    pub train_loss: f64,
    /// Accuracy of the pre-update predictions on the (augmented) batches.
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_confusion: ConfusionMatrix,
    pub val_metrics: MetricsReport,
    pub improved: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Mini-batch loss of every optimizer step, in order.
    pub step_losses: Vec<f64>,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub best_val_loss: Option<f64>,
}

impl TrainHistory {
    pub fn lr_trace(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.lr).collect()
    }
}

#[derive(Clone, Debug)]
pub struct FitOutcome {
    /// Parameters after the final step.
    pub model: Cect,
    /// Parameters at the lowest validation loss.
    pub best: Cect,
    pub history: TrainHistory,
}

pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const STATE_FILE: &str = "train_state.json";

/// Everything needed to continue a run besides parameters and moments.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct TrainState {
    config: TrainConfig,
    epochs_done: usize,
    adam_steps: u64,
    scheduler: Plateau,
    history: TrainHistory,
}

/// Images per gradient worker. Fixed so that the summation order, and hence
/// every bit of the result, does not depend on the thread count.
const GRAD_CHUNK: usize = 8;

struct StepResult {
    loss: f64,
    correct: usize,
    grads: BTreeMap<String, Tensor>,
}

/// Mean cross-entropy over the batch and its gradient for every parameter
/// the forward pass touches.
fn batch_gradients(model: &Cect, x: &Tensor, labels: &[usize]) -> Result<StepResult> {
    let b = labels.len();
    let per = x.numel() / b;
    let shape = x.shape().to_vec();
    let parts = par::map_range(b.div_ceil(GRAD_CHUNK), |c| -> Result<StepResult> {
        let lo = c * GRAD_CHUNK;
        let hi = (lo + GRAD_CHUNK).min(b);
        let mut s = shape.clone();
        s[0] = hi - lo;
        let xs = Tensor::new(s, x.data()[lo * per..hi * per].to_vec())?;
        let mut g = Graph::new();
        let p = model.params().bind(&mut g, true);
        let xv = g.input(xs);
        let out = forward(&mut g, &p, model.config(), xv)?;
        let ce = g.cross_entropy(out.logits, &labels[lo..hi])?;
        let loss = g.scale(ce, ((hi - lo) as f64 / b as f64) as f32)?;
        let value = g.value(loss).item()?;
        if !value.is_finite() {
            g.check_finite()?;
            return Err(CectError::Numeric(format!("loss is {value}")));
        }
        g.backward(loss)?;
        let logits = g.value(out.logits).data();
        let correct = labels[lo..hi]
            .iter()
            .zip(logits.chunks_exact(2))
            .filter(|(&y, r)| usize::from(r[1] > r[0]) == y)
            .count();
        let grads = p
            .iter()
            .filter_map(|(name, &v)| g.grad(v).map(|t| (name.clone(), t.clone())))
            .collect();
        Ok(StepResult {
            loss: f64::from(value),
            correct,
            grads,
        })
    });
    let mut total: Option<StepResult> = None;
    for part in parts {
        let part = part?;
        match &mut total {
            None => total = Some(part),
            Some(acc) => {
                acc.loss += part.loss;
                acc.correct += part.correct;
                for (name, g) in part.grads {
                    let a = acc
                        .grads
                        .get_mut(&name)
                        .expect("every chunk touches the same parameters");
                    a.data_mut().iter_mut().zip(g.data()).for_each(|(x, y)| *x += y);
                }
            }
        }
    }
    let total = total.expect("non-empty batch");
    if let Some((name, _)) = total.grads.iter().find(|(_, g)| !g.is_finite()) {
        return Err(CectError::Numeric(format!("gradient of `{name}` is not finite")));
    }
    Ok(total)
}

struct Loop {
    model: Cect,
    best: ParamStore,
    adam: Adam,
    scheduler: Plateau,
    history: TrainHistory,
    epochs_done: usize,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(|e| CectError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| CectError::io(path, e))
}

fn param_records(params: &ParamStore) -> impl Iterator<Item = (&str, &Tensor)> {
    params.iter().map(|(k, t)| (k.as_str(), t))
}

impl Loop {
    fn save(&self, dir: &Path, cfg: &TrainConfig, improved: bool) -> Result<()> {
        let mcfg = self.model.config();
        let digest = mcfg.digest();
        if improved {
            write_atomic(
                &dir.join(BEST_CHECKPOINT),
                &checkpoint::encode(&digest, param_records(self.model.params())),
            )?;
        }
        let moments = self.adam.records();
        let records = param_records(self.model.params()).chain(moments.iter().map(|(k, t)| (k.as_str(), *t)));
        write_atomic(&dir.join(LAST_CHECKPOINT), &checkpoint::encode(&digest, records))?;
        let state = TrainState {
            config: cfg.clone(),
            epochs_done: self.epochs_done,
            adam_steps: self.adam.steps(),
            scheduler: self.scheduler.clone(),
            history: self.history.clone(),
        };
        let json = serde_json::to_vec_pretty(&state).map_err(|e| CectError::Serialization(e.to_string()))?;
        write_atomic(&dir.join(STATE_FILE), &json)
    }

    fn run(
        mut self,
        train: &Dataset,
        val: &Dataset,
        cfg: &TrainConfig,
        run_dir: Option<&Path>,
        observer: &mut dyn FnMut(&EpochRecord),
    ) -> Result<FitOutcome> {
        let plan = cfg.augment.clone().map(|config| AugmentPlan { config, seed: cfg.seed });
        let max_steps = cfg.max_steps.unwrap_or(usize::MAX);
        let mut step = self.history.step_losses.len();
        while self.epochs_done < cfg.epochs && step < max_steps {
            let epoch = self.epochs_done;
            let lr = self.scheduler.lr;
            let mut order: Vec<usize> = (0..train.len()).collect();
            Rng::new(cfg.seed)
                .fork("shuffle")
                .fork_index(epoch as u64)
                .shuffle(&mut order);
            let (mut loss_sum, mut correct, mut seen, mut steps_here) = (0.0, 0, 0, 0);
            for idx in order.chunks(cfg.batch_size) {
                if step >= max_steps {
                    break;
                }
                let (x, labels) = train.batch(idx, &cfg.normalization, plan.as_ref().map(|p| (p, epoch)));
                let r = batch_gradients(&self.model, &x, &labels)
                    .map_err(|e| CectError::Numeric(format!("training diverged at epoch {epoch}, step {step}: {e}")))?;
                self.adam.step(self.model.params_mut(), &r.grads, lr)?;
                self.history.step_losses.push(r.loss);
                loss_sum += r.loss;
                correct += r.correct;
                seen += labels.len();
                steps_here += 1;
                step += 1;
            }
            let v = evaluate(&self.model, val, &cfg.normalization)?;
            self.scheduler.step(v.loss)?;
            let improved = self.scheduler.improved;
            if improved {
                self.best = self.model.params().clone();
                self.history.best_epoch = Some(epoch);
                self.history.best_val_loss = Some(v.loss);
            }
            let record = EpochRecord {
                epoch,
                steps: step,
                lr,
                train_loss: loss_sum / steps_here.max(1) as f64,
                train_accuracy: correct as f64 / seen.max(1) as f64,
                val_loss: v.loss,
                val_confusion: v.confusion,
                val_metrics: v.metrics,
                improved,
            };
            self.history.epochs.push(record);
            self.epochs_done += 1;
            if let Some(dir) = run_dir {
                self.save(dir, cfg, improved)?;
            }
            observer(self.history.epochs.last().expect("just pushed"));
        }
        let best = Cect::from_params(self.model.config().clone(), self.best)?;
        Ok(FitOutcome {
            model: self.model,
            best,
            history: self.history,
        })
    }
}

fn check_data(train: &Dataset, val: &Dataset, model: &CectConfig) -> Result<()> {
    if train.is_empty() || val.is_empty() {
        return Err(CectError::Validation(
            "training needs non-empty train and validation sets".into(),
        ));
    }
    for (name, d) in [("train", train), ("validation", val)] {
        if d.resolution() != model.input_resolution {
            return Err(CectError::Validation(format!(
                "{name} images are {0}x{0}, the model expects {1}x{1}",
                d.resolution(),
                model.input_resolution
            )));
        }
    }
    Ok(())
}

/// Trains `model` from scratch. With `run_dir`, checkpoints and the resume
/// state are written there after every epoch.
pub fn fit(
    model: Cect,
    train: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
    run_dir: Option<&Path>,
    observer: &mut dyn FnMut(&EpochRecord),
) -> Result<FitOutcome> {
    cfg.validate()?;
    check_data(train, val, model.config())?;
    if let Some(dir) = run_dir {
        std::fs::create_dir_all(dir).map_err(|e| CectError::io(dir, e))?;
    }
    let state = Loop {
        best: model.params().clone(),
        adam: Adam::new(cfg.adam, model.params()),
        scheduler: Plateau::new(cfg.plateau, cfg.initial_lr),
        history: TrainHistory::default(),
        epochs_done: 0,
        model,
    };
    state.run(train, val, cfg, run_dir, observer)
}

/// Continues the run stored in `run_dir` up to `cfg.epochs`. The result is
/// identical to an uninterrupted run of the same length.
pub fn resume(
    run_dir: &Path,
    model_config: &CectConfig,
    train: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
    observer: &mut dyn FnMut(&EpochRecord),
) -> Result<FitOutcome> {
    cfg.validate()?;
    check_data(train, val, model_config)?;
    let state_path: PathBuf = run_dir.join(STATE_FILE);
    let bytes = std::fs::read(&state_path).map_err(|e| CectError::io(&state_path, e))?;
    let state: TrainState =
        serde_json::from_slice(&bytes).map_err(|e| CectError::Checkpoint(format!("{}: {e}", state_path.display())))?;
    if !state.config.same_run(cfg) {
        return Err(CectError::Validation(format!(
            "{} was written with a different training configuration",
            state_path.display()
        )));
    }
    let last = checkpoint::load(&run_dir.join(LAST_CHECKPOINT), model_config)?.records;
    let (moments, weights): (BTreeMap<_, _>, BTreeMap<_, _>) = last
        .into_iter()
        .partition(|(k, _)| k.starts_with(FIRST_MOMENT_PREFIX) || k.starts_with(SECOND_MOMENT_PREFIX));
    let mut params = ParamStore::new();
    for (k, t) in weights {
        params.insert(k, t);
    }
    let model = Cect::from_params(model_config.clone(), params)?;
    let adam = Adam::restore(cfg.adam, state.adam_steps, model.params(), &moments)?;
    let best = if state.history.best_epoch.is_some() {
        let mut best = ParamStore::new();
        for (k, t) in checkpoint::load(&run_dir.join(BEST_CHECKPOINT), model_config)?.records {
            best.insert(k, t);
        }
        Cect::from_params(model_config.clone(), best)?.into_params()
    } else {
        model.params().clone()
    };
    Loop {
        model,
        best,
        adam,
        scheduler: state.scheduler,
        history: state.history,
        epochs_done: state.epochs_done,
    }
    .run(train, val, cfg, Some(run_dir), observer)
}
