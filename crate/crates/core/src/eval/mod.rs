//! Confusion counts, the six classification metrics, and the coefficient
//! sweep and ablation harnesses built on top of training.

mod ablation;
mod confusion;
mod evaluate;
mod experiment;
mod metrics;
mod sweep;

pub use ablation::{ablate, AblationRow, AblationSpec, Blocks};
pub use confusion::{confusion, confusion_from_logits, predict, ConfusionMatrix};
pub use evaluate::{evaluate, evaluate_logits, mean_cross_entropy, Evaluation};
pub use experiment::{init_seed, run_experiment, ExperimentData, ExperimentResult};
pub use metrics::{metrics, MetricsReport};
pub use sweep::{in_constraint_set, sweep, SweepRow, SweepSpec, COEFFICIENT_CHOICES};
