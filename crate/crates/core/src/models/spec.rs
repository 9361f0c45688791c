use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::vec3::{norm, Vec3};
use crate::geometry::{FieldStats, HeadRange};

/// Trainable-parameter totals of the reference implementations, for reporting only.
pub const REFERENCE_PARAMETER_COUNTS: [(Architecture, usize); 3] = [
    (Architecture::PointNet, 250_927),
    (Architecture::DeepOnet, 264_931),
    (Architecture::PointDeepOnet, 251_936),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    #[serde(rename = "pointnet")]
    PointNet,
    #[serde(rename = "deeponet")]
    DeepOnet,
    #[serde(rename = "point_deeponet")]
    PointDeepOnet,
}

impl Architecture {
    pub fn name(self) -> &'static str {
        match self {
            Architecture::PointNet => "pointnet",
            Architecture::DeepOnet => "deeponet",
            Architecture::PointDeepOnet => "point_deeponet",
        }
    }

    pub fn head(self) -> HeadRange {
        match self {
            Architecture::PointNet => HeadRange::Sigmoid,
            _ => HeadRange::Tanh,
        }
    }

    /// Operator models are pointwise in their queries and accept any node count.
    pub fn is_operator(self) -> bool {
        !matches!(self, Architecture::PointNet)
    }

    pub fn reference_parameter_count(self) -> usize {
        REFERENCE_PARAMETER_COUNTS
            .iter()
            .find(|(a, _)| *a == self)
            .map(|(_, n)| *n)
            .unwrap()
    }
}

impl std::str::FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pointnet" => Ok(Architecture::PointNet),
            "deeponet" => Ok(Architecture::DeepOnet),
            "point_deeponet" => Ok(Architecture::PointDeepOnet),
            other => Err(Error::Invalid(format!("unknown architecture `{other}`"))),
        }
    }
}

/// Architecture choice and widths.
///
/// Width lists are hidden layers; the layer producing the latent (or the head)
/// is added on top.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub architecture: Architecture,
    /// Latent width `H` of the branch/trunk dot product.
    pub latent: usize,
    /// Output fields per node.
    pub fields: usize,
    /// Frequency of the sine trunk.
    pub sine_omega: f64,
    pub use_mass: bool,
    pub use_sdf: bool,
    /// Resampled node count `N` used in training.
    pub points: usize,
    /// Condition MLP (operator models).
    pub branch_widths: Vec<usize>,
    /// Point-cloud encoder of the Point-DeepONet branch.
    pub encoder_widths: Vec<usize>,
    /// Trunk (SiLU for DeepONet, sine for Point-DeepONet).
    pub trunk_widths: Vec<usize>,
    /// Shared MLP after the element-wise fusion (Point-DeepONet).
    pub fusion_widths: Vec<usize>,
    /// Uniform width multiplier applied to the PointNet ladders.
    pub pointnet_scale: f64,
    pub pointnet_local: Vec<usize>,
    pub pointnet_global: Vec<usize>,
    pub pointnet_head: Vec<usize>,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self::for_architecture(Architecture::PointDeepOnet)
    }
}

impl ModelSpec {
    /// Desk-scale defaults for `arch`.
    pub fn for_architecture(arch: Architecture) -> Self {
        Self {
            architecture: arch,
            latent: 128,
            fields: 4,
            sine_omega: 30.0,
            use_mass: true,
            use_sdf: arch != Architecture::PointNet,
            points: 256,
            branch_widths: vec![64],
            encoder_widths: vec![64],
            trunk_widths: match arch {
                Architecture::DeepOnet => vec![128, 128],
                _ => vec![128],
            },
            fusion_widths: vec![128],
            pointnet_scale: 0.53,
            pointnet_local: vec![64, 64],
            pointnet_global: vec![64, 128, 1024],
            pointnet_head: vec![512, 256, 128],
        }
    }

    /// Uniformly narrow every width list and set `H`; used for small test models.
    pub fn with_width(mut self, width: usize) -> Self {
        self.latent = width;
        for list in [
            &mut self.branch_widths,
            &mut self.encoder_widths,
            &mut self.trunk_widths,
            &mut self.fusion_widths,
        ] {
            list.iter_mut().for_each(|w| *w = width);
        }
        self
    }

    pub fn head(&self) -> HeadRange {
        self.architecture.head()
    }

    /// PointNet ladder after scaling, rounded to the nearest integer.
    pub fn scaled(&self, ladder: &[usize]) -> Vec<usize> {
        ladder
            .iter()
            .map(|&w| ((w as f64 * self.pointnet_scale).round() as usize).max(1))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Invalid(format!("model spec: {m}")));
        if self.latent == 0 || self.fields == 0 || self.points == 0 {
            return bad("latent, fields and points must be ≥ 1");
        }
        if !(self.sine_omega.is_finite() && self.sine_omega > 0.0) {
            return bad("sine_omega must be positive");
        }
        let empty_or_zero = |l: &[usize]| l.is_empty() || l.contains(&0);
        match self.architecture {
            Architecture::PointNet => {
                if self.use_sdf {
                    return bad("pointnet has no trunk, use_sdf must be false");
                }
                if self.pointnet_scale.is_nan() || self.pointnet_scale <= 0.0 {
                    return bad("pointnet_scale must be positive");
                }
                for l in [&self.pointnet_local, &self.pointnet_global, &self.pointnet_head] {
                    if empty_or_zero(l) {
                        return bad("pointnet width lists must be non-empty and positive");
                    }
                }
            }
            Architecture::DeepOnet => {
                if empty_or_zero(&self.branch_widths) || empty_or_zero(&self.trunk_widths) {
                    return bad("branch and trunk width lists must be non-empty and positive");
                }
            }
            Architecture::PointDeepOnet => {
                for l in [
                    &self.branch_widths,
                    &self.encoder_widths,
                    &self.trunk_widths,
                    &self.fusion_widths,
                ] {
                    if empty_or_zero(l) {
                        return bad("width lists must be non-empty and positive");
                    }
                }
            }
        }
        Ok(())
    }
}

/// Global load condition of one case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadCondition {
    pub mass: f64,
    pub force: f64,
    pub direction: Vec3,
}

impl LoadCondition {
    pub fn new(mass: f64, force: f64, direction: Vec3) -> Result<Self> {
        let c = Self {
            mass,
            force,
            direction,
        };
        c.validate(1e-9)?;
        Ok(c)
    }

    pub fn validate(&self, tolerance: f64) -> Result<()> {
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return Err(Error::Invalid(format!("mass must be > 0, got {}", self.mass)));
        }
        if !(self.force >= 0.0 && self.force.is_finite()) {
            return Err(Error::Invalid(format!("force must be ≥ 0, got {}", self.force)));
        }
        let n = norm(self.direction);
        if n.is_nan() || (n - 1.0).abs() > tolerance {
            return Err(Error::Invalid(format!(
                "direction must be a unit vector, |d| = {n}"
            )));
        }
        Ok(())
    }

    /// `(m, f, d_x, d_y, d_z)`
    pub fn to_array(&self) -> [f64; 5] {
        [
            self.mass,
            self.force,
            self.direction[0],
            self.direction[1],
            self.direction[2],
        ]
    }

    pub fn from_array(c: [f64; 5]) -> Self {
        Self {
            mass: c[0],
            force: c[1],
            direction: [c[2], c[3], c[4]],
        }
    }

    /// Mass and force mapped onto `[-1, 1]`; direction left as is.
    pub fn normalized(&self, stats: &FieldStats) -> [f64; 5] {
        [
            stats.normalize_mass(self.mass),
            stats.normalize_force(self.force),
            self.direction[0],
            self.direction[1],
            self.direction[2],
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pointnet_ladder_scaling() {
        let s = ModelSpec::for_architecture(Architecture::PointNet);
        assert_eq!(s.scaled(&s.pointnet_global), vec![34, 68, 543]);
        assert_eq!(s.scaled(&s.pointnet_head), vec![271, 136, 68]);
    }

    #[test]
    fn flags_must_fit_architecture() {
        let mut s = ModelSpec::for_architecture(Architecture::PointNet);
        s.validate().unwrap();
        s.use_sdf = true;
        assert!(s.validate().is_err());
        let mut d = ModelSpec::for_architecture(Architecture::DeepOnet);
        d.trunk_widths.clear();
        assert!(d.validate().is_err());
    }

    #[test]
    fn load_condition_checks() {
        assert!(LoadCondition::new(1.0, 2.0, [0.0, 0.0, 1.0]).is_ok());
        assert!(LoadCondition::new(0.0, 2.0, [0.0, 0.0, 1.0]).is_err());
        assert!(LoadCondition::new(1.0, -1.0, [0.0, 0.0, 1.0]).is_err());
        assert!(LoadCondition::new(1.0, 1.0, [0.0, 0.0, 1.1]).is_err());
    }

    #[test]
    fn spec_serializes_as_toml() {
        let s = ModelSpec::for_architecture(Architecture::DeepOnet);
        let text = toml::to_string(&s).unwrap();
        assert!(text.contains("architecture = \"deeponet\""));
        let back: ModelSpec = toml::from_str(&text).unwrap();
        assert_eq!(back, s);
    }
}
