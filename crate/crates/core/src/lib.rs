//! Operator-learning surrogates for per-node displacement and von Mises
//! stress on unstructured 3D point clouds.
//!
//! Three architectures share one small reverse-mode kernel:
//! a PointNet baseline, a DeepONet with an SDF-aware trunk, and
//! Point-DeepONet, which adds a point-cloud branch and a sine trunk fused
//! by element-wise multiplication before the final latent dot product.

pub mod config;
pub mod data;
pub mod error;
pub mod geometry;
pub mod kernel;
pub mod models;
pub mod train;

pub use error::{Error, Result};
pub use config::ExperimentConfig;
pub use data::{Dataset, LoadLabel, SampleRecord, Split};
pub use geometry::{FieldStats, HeadRange, PointSet, Shape, TriMesh};
pub use kernel::{Mode, Tensor};
pub use models::{Architecture, LoadCondition, Model, ModelInput, ModelSpec};
pub use train::{Checkpoint, EvalMode, MetricsReport, TrainConfig};
