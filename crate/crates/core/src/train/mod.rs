//! Training loop, evaluation, cross-validation, gradient checking and
//! checkpoint files.

mod checkpoint;
mod cv;
mod gradcheck;
mod metrics;
mod trainer;

pub use checkpoint::{checkpoint_bytes, checkpoint_from_bytes, load_checkpoint, save_checkpoint};
pub use cv::{cross_validate, holdout_split, stratified_folds, CvReport};
pub use gradcheck::{gradcheck, relative_error, GradcheckConfig, GradcheckReport, GroupError};
pub use metrics::{ClassMetrics, Confusion, MetricsReport};
pub use trainer::{
    build_model, evaluate, predict_all, save_curve, train, train_step, write_curve, CurvePoint,
    StopReason, TrainConfig, TrainOutcome,
};
