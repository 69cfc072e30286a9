//! Training loop, checkpoints, split evaluation, single-pair inference and
//! heatmap export.

mod checkpoint;
mod eval;
mod export;
mod train;

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use eval::{evaluate, evaluate_split, infer, Inference};
pub use export::{export_heatmap, heatmap_color, read_heatmap_ply, BASE_GRAY};
pub use train::{
    batch_gradient, pair_loss_gradient, prepare_clouds, train, train_on, EpochLog, PairJob, PreparedCloud,
    TrainOutcome,
};
