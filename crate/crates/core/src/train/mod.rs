//! Training loop, metrics, evaluation, checkpoints and inference.

mod checkpoint;
mod evaluate;
mod metrics;
mod predict;
mod trainer;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use evaluate::{evaluate, MetricsReport, MetricsRow, PooledRow, REPORT_COLUMNS};
pub use metrics::{compute_metrics, Metrics};
pub use predict::{
    full_resolution_input, predict_chunked, predict_point_set, predict_points, EvalMode,
    FieldPrediction, FieldPredictor, DEFAULT_CHUNK,
};
pub use trainer::{
    train, validation_batches, write_history, HistoryRow, TrainConfig, TrainOutputs, Trainer,
    HISTORY_COLUMNS,
};
