//! Mini-batch training with Adam, plateau-driven learning-rate decay,
//! checkpointing and exact resumption.

mod adam;
mod fit;
mod plateau;

pub use adam::{Adam, AdamConfig, FIRST_MOMENT_PREFIX, SECOND_MOMENT_PREFIX};
pub use fit::{
    fit, resume, EpochRecord, FitOutcome, TrainConfig, TrainHistory, BEST_CHECKPOINT, LAST_CHECKPOINT, STATE_FILE,
};
pub use plateau::{Plateau, PlateauConfig};
