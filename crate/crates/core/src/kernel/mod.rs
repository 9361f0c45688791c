//! Reverse-mode differentiation engine and the layer set the three
//! architectures are built from.

mod activation;
mod gradcheck;
mod graph;
mod layers;
mod optim;
mod params;
mod tensor;

pub use activation::Activation;
pub use gradcheck::{grad_check, GradCheckReport, KINK_RATIO, REL_FLOOR};
pub use graph::{BatchStats, Graph, Var};
pub use layers::{BatchNorm, Dense, Init, Mode, NormStore, RunningStats, BN_EPS, BN_MOMENTUM};
pub use optim::{AdamW, AdamWConfig};
pub use params::{ParamId, ParamStore};
pub use tensor::Tensor;
