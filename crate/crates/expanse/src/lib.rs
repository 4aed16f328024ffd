//! Continual deep transfer learning for dense networks: two-step
//! training (exemplary data first at a high learning rate, then the
//! full mix at a low one) and model expansion that embeds a trained
//! small network inside a wider one with a per-entry freeze mask.
//!
//! The crate is organized around a config-driven experiment runner:
//!
//! - [`data`]: IDX loading, class filtering, exemplar selection,
//!   seeded mixing, k-fold splits.
//! - [`netcore`]: dense ReLU network, softmax-cross-entropy loss,
//!   exact backprop gradients, evaluation.
//! - [`optim`]: Adam with L2 decay and freeze-mask support.
//! - [`expand`]: the expansion operator and its freeze mask.
//! - [`train`]: the k-fold epoch regimen and two-step training.
//! - [`config`] / [`runner`]: TOML experiment configs and the stage
//!   chain executor.
//! - [`persist`]: bit-exact checkpoints and JSON reports.
//!
//! See the `examples/` directory for one runnable example per major
//! capability, and `configs/` for the bundled experiment files.

pub mod config;
pub mod data;
pub mod error;
pub mod expand;
pub mod netcore;
pub mod optim;
pub mod persist;
pub mod runner;
pub mod train;

pub use config::{DataBank, ExperimentConfig};
pub use data::{kfold_split, load_idx, mix, write_idx, Dataset, FoldAssignment};
pub use error::{Error, Result};
pub use expand::{
    coverage_report, expand_network, CoverageReport, ExpansionPlan, FreezeMask, NewWeightMode,
};
pub use netcore::{
    backward, evaluate, forward, init_network, softmax_xent, DenseLayer, EvalReport, Gradients,
    Network, NetworkSpec,
};
pub use optim::{adam_init, adam_step, AdamState, TrainConfig};
pub use persist::{load_checkpoint, save_checkpoint, write_report, Report};
pub use runner::{expanse_run, RunOutput, StageOutput};
pub use train::{
    forgetting_report, train_epoch_kfold, train_kfold, two_step_train, EpochStats,
    ForgettingReport, StageResult, TrainStats,
};
