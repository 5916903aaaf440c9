//! Training, evaluation, metrics, attention tracing and ablations.

pub mod ablate;
pub mod batch;
pub mod eval;
pub mod gradcheck;
pub mod metrics;
pub mod trace;
pub mod train;

pub use ablate::{ablate, full_grid, Ablation, AblationRow};
pub use eval::{evaluate, EvalResult};
pub use metrics::{auc_roc, average_precision};
pub use trace::{AttentionTraceRecord, Tracer};
pub use train::{build_model, evaluate_test, train, EpochRecord, RunLog, RunReport, TrainOutcome};
