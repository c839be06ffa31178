//! Small convolutional network with hand-written backward passes.

mod adam;
mod arch;
mod checkpoint;
mod gemm;
mod model;
mod train;

pub use adam::Adam;
pub use arch::{ArchError, Architecture, ConvShape, ConvSpec};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, CheckpointError, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use model::{init_model, Loss, Model, ModelError};
pub use train::{
    action_from_output, action_target, evaluate_error, evaluate_sequence, history_csv, median,
    rollout_policy, score_sequence, train_bc, train_regressor, EpochRecord, EvalSets, NetPolicy,
    SequenceScore, TrainConfig, TrainError,
};
