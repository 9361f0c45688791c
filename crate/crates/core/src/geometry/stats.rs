//! Min–max statistics and the affine maps into bounded activation ranges.

use serde::{Deserialize, Serialize};

use super::vec3::Vec3;
use crate::error::{Error, Result};

pub const FIELD_NAMES: [&str; 4] = ["u_x", "u_y", "u_z", "von_mises"];
const COORD_NAMES: [&str; 3] = ["x", "y", "z"];

/// Output activation a target must be mapped into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadRange {
    /// `[-0.95, 0.95]`
    Tanh,
    /// `[0.025, 0.975]`
    Sigmoid,
}

impl HeadRange {
    pub fn bounds(self) -> (f64, f64) {
        match self {
            HeadRange::Tanh => (-0.95, 0.95),
            HeadRange::Sigmoid => (0.025, 0.975),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub min: f64,
    pub max: f64,
}

impl MinMax {
    fn empty() -> Self {
        Self {
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        }
    }

    fn push(&mut self, v: f64) {
        self.min = self.min.min(v);
        self.max = self.max.max(v);
    }

    fn check(self, name: &str) -> Result<Self> {
        if self.min.is_nan() || self.max.is_nan() || self.max <= self.min {
            return Err(Error::ConstantField(name.to_string()));
        }
        Ok(self)
    }

    /// Affine map of `[min, max]` onto `[lo, hi]`.
    #[inline]
    pub fn to_range(self, v: f64, (lo, hi): (f64, f64)) -> f64 {
        lo + (v - self.min) / (self.max - self.min) * (hi - lo)
    }

    #[inline]
    pub fn from_range(self, v: f64, (lo, hi): (f64, f64)) -> f64 {
        self.min + (v - lo) / (hi - lo) * (self.max - self.min)
    }
}

/// Training-split ranges of every target field and scalar input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldStats {
    /// `u_x, u_y, u_z, von_mises`
    pub targets: [MinMax; 4],
    pub coords: [MinMax; 3],
    pub sdf: MinMax,
    pub mass: MinMax,
    pub force: MinMax,
}

const INPUT_RANGE: (f64, f64) = (-1.0, 1.0);

impl FieldStats {
    pub fn normalize_target(&self, field: usize, v: f64, head: HeadRange) -> f64 {
        self.targets[field].to_range(v, head.bounds())
    }

    pub fn denormalize_target(&self, field: usize, v: f64, head: HeadRange) -> f64 {
        self.targets[field].from_range(v, head.bounds())
    }

    pub fn normalize_targets(&self, t: [f64; 4], head: HeadRange) -> [f64; 4] {
        std::array::from_fn(|k| self.normalize_target(k, t[k], head))
    }

    pub fn denormalize_targets(&self, t: [f64; 4], head: HeadRange) -> [f64; 4] {
        std::array::from_fn(|k| self.denormalize_target(k, t[k], head))
    }

    /// Coordinates mapped per axis onto `[-1, 1]`.
    pub fn normalize_coords(&self, p: Vec3) -> Vec3 {
        std::array::from_fn(|k| self.coords[k].to_range(p[k], INPUT_RANGE))
    }

    pub fn normalize_sdf(&self, d: f64) -> f64 {
        self.sdf.to_range(d, INPUT_RANGE)
    }

    pub fn normalize_mass(&self, m: f64) -> f64 {
        self.mass.to_range(m, INPUT_RANGE)
    }

    pub fn normalize_force(&self, f: f64) -> f64 {
        self.force.to_range(f, INPUT_RANGE)
    }
}

/// Streaming accumulator for [`FieldStats`].
#[derive(Debug, Clone)]
pub struct StatsAccumulator {
    targets: [MinMax; 4],
    coords: [MinMax; 3],
    sdf: MinMax,
    mass: MinMax,
    force: MinMax,
}

impl Default for StatsAccumulator {
    fn default() -> Self {
        Self {
            targets: [MinMax::empty(); 4],
            coords: [MinMax::empty(); 3],
            sdf: MinMax::empty(),
            mass: MinMax::empty(),
            force: MinMax::empty(),
        }
    }
}

impl StatsAccumulator {
    pub fn push_node(&mut self, coords: Vec3, sdf: f64, targets: [f64; 4]) {
        self.coords.iter_mut().zip(coords).for_each(|(acc, v)| acc.push(v));
        self.sdf.push(sdf);
        self.targets.iter_mut().zip(targets).for_each(|(acc, v)| acc.push(v));
    }

    pub fn push_condition(&mut self, mass: f64, force: f64) {
        self.mass.push(mass);
        self.force.push(force);
    }

    /// Fails with the name of the first constant field.
    pub fn finish(&self) -> Result<FieldStats> {
        let mut targets = self.targets;
        for (t, name) in targets.iter_mut().zip(FIELD_NAMES) {
            *t = t.check(name)?;
        }
        let mut coords = self.coords;
        for (c, name) in coords.iter_mut().zip(COORD_NAMES) {
            *c = c.check(name)?;
        }
        Ok(FieldStats {
            targets,
            coords,
            sdf: self.sdf.check("sdf")?,
            mass: self.mass.check("mass")?,
            force: self.force.check("force")?,
        })
    }
}
