use serde::{Deserialize, Serialize};

use super::mesh::TriMesh;
use super::vec3::{add, dot, norm, scale, sub, Aabb, Vec3};

/// A closed solid with an exact signed distance (negative inside).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Sphere {
        center: Vec3,
        radius: f64,
    },
    Box {
        center: Vec3,
        half_extents: Vec3,
    },
    /// Segment `a`–`b` swept by a ball of `radius`.
    Capsule {
        a: Vec3,
        b: Vec3,
        radius: f64,
    },
    Mesh(TriMesh),
}

impl Shape {
    /// Signed distance: zero on the boundary, negative inside.
    pub fn sdf(&self, p: Vec3) -> f64 {
        match self {
            Shape::Sphere { center, radius } => norm(sub(p, *center)) - radius,
            Shape::Box {
                center,
                half_extents,
            } => {
                let q: Vec3 = std::array::from_fn(|k| (p[k] - center[k]).abs() - half_extents[k]);
                let outside = norm([q[0].max(0.0), q[1].max(0.0), q[2].max(0.0)]);
                let inside = q[0].max(q[1]).max(q[2]).min(0.0);
                outside + inside
            }
            Shape::Capsule { a, b, radius } => {
                let ab = sub(*b, *a);
                let ap = sub(p, *a);
                let len2 = dot(ab, ab);
                let t = if len2 > 0.0 {
                    (dot(ap, ab) / len2).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                norm(sub(ap, scale(ab, t))) - radius
            }
            Shape::Mesh(mesh) => mesh.sdf(p),
        }
    }

    pub fn bounds(&self) -> Aabb {
        match self {
            Shape::Sphere { center, radius } => Aabb {
                min: center.map(|c| c - radius),
                max: center.map(|c| c + radius),
            },
            Shape::Box {
                center,
                half_extents,
            } => Aabb {
                min: std::array::from_fn(|k| center[k] - half_extents[k]),
                max: std::array::from_fn(|k| center[k] + half_extents[k]),
            },
            Shape::Capsule { a, b, radius } => Aabb {
                min: std::array::from_fn(|k| a[k].min(b[k]) - radius),
                max: std::array::from_fn(|k| a[k].max(b[k]) + radius),
            },
            Shape::Mesh(mesh) => mesh.bounds(),
        }
    }

    /// Reference point of the shape: the center for primitives, the
    /// bounding-box center for meshes.
    pub fn center(&self) -> Vec3 {
        match self {
            Shape::Sphere { center, .. } | Shape::Box { center, .. } => *center,
            Shape::Capsule { a, b, .. } => scale(add(*a, *b), 0.5),
            Shape::Mesh(mesh) => mesh.bounds().center(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Shape::Sphere { .. } => "sphere",
            Shape::Box { .. } => "box",
            Shape::Capsule { .. } => "capsule",
            Shape::Mesh(_) => "mesh",
        }
    }
}
