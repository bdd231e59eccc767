//! Deep Q-network learner written against `ndarray`.

pub mod adam;
pub mod chain;
pub mod network;
pub mod qgrid;
pub mod replay;
pub mod schedule;
pub mod trainer;

pub use adam::Adam;
pub use chain::ChainEnv;
pub use network::{NetworkSpec, QNetwork};
pub use qgrid::{
    export_qgrid, read_qgrid_axes, read_qgrid_csv, write_qgrid_axes, write_qgrid_csv, QGridSpec,
    GRID_SIZE,
};
pub use replay::{ReplayBuffer, Transition};
pub use schedule::{EpsilonSchedule, TargetSync};
pub use trainer::{
    argmax, sync_target, td_target, train_curriculum, train_step, write_log_csv, Checkpoint,
    CheckpointPolicy, EnvStep, LogRow, Stage, Trainer, TrainerConfig, TrainingEnv, PRESETS,
};
