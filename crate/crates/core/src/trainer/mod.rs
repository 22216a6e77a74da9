//! Class-incremental training: configuration, exemplar memory, the
//! three-group optimization loop and checkpoints.

mod checkpoint;
mod config;
mod exemplars;
mod train;

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use config::{
    total_objective, Ablations, DimsPreset, DimsSpec, ModelOptions, ScheduleSpec, TrainConfig,
};
pub use exemplars::{exemplar_quotas, select_exemplars, ExemplarStore};
pub use train::{
    classification_loss, epoch_order, growth_seed, init_seed, run_incremental, sample_seed,
    BatchPosition, Dataset, EpochLog, Inference, Learner, LossSums, Optimizers, RunOutput,
};
