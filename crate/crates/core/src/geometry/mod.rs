//! Signed distances, volume sampling, fixed-size resampling and the
//! normalization statistics shared by training and inference.

mod mesh;
mod sampling;
mod shape;
mod stats;
pub mod vec3;

pub use mesh::{closest_point_on_triangle, TriMesh};
pub use sampling::{resample_fixed, sample_volume, PointSet, DEGENERATE_PROPOSALS, DEGENERATE_RATE};
pub use shape::Shape;
pub use stats::{FieldStats, HeadRange, MinMax, StatsAccumulator, FIELD_NAMES};
pub use vec3::{Aabb, Vec3};
