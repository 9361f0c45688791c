use rand::seq::index;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::shape::Shape;
use super::vec3::Vec3;
use crate::error::{Error, Result};

/// Proposal budget after which a low acceptance rate is declared degenerate.
pub const DEGENERATE_PROPOSALS: u64 = 1_000_000;
pub const DEGENERATE_RATE: f64 = 1e-4;

/// Point coordinates with their signed distances.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointSet {
    pub coords: Vec<Vec3>,
    pub sdf: Vec<f64>,
}

impl PointSet {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Attach signed distances of `shape` to arbitrary coordinates.
    pub fn with_sdf(shape: &Shape, coords: Vec<Vec3>) -> Self {
        let sdf = coords.iter().map(|&p| shape.sdf(p)).collect();
        Self { coords, sdf }
    }
}

/// Draw `n` points with `sdf ≤ 0` by rejection from the bounding box.
pub fn sample_volume(shape: &Shape, n: usize, seed: u64) -> Result<PointSet> {
    if n == 0 {
        return Err(Error::Invalid("sample_volume needs n ≥ 1".into()));
    }
    let bounds = shape.bounds();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = PointSet {
        coords: Vec::with_capacity(n),
        sdf: Vec::with_capacity(n),
    };
    let mut proposals: u64 = 0;
    while out.len() < n {
        let p: Vec3 = std::array::from_fn(|k| {
            let (lo, hi) = (bounds.min[k], bounds.max[k]);
            if hi > lo {
                rng.gen_range(lo..hi)
            } else {
                lo
            }
        });
        proposals += 1;
        let d = shape.sdf(p);
        if d <= 0.0 {
            out.coords.push(p);
            out.sdf.push(d);
        }
        if proposals >= DEGENERATE_PROPOSALS {
            let rate = out.len() as f64 / proposals as f64;
            if rate < DEGENERATE_RATE {
                return Err(Error::DegenerateShape { rate, proposals });
            }
        }
    }
    Ok(out)
}

/// Choose `target` indices out of `available` nodes.
///
/// With enough nodes the draw is without replacement; otherwise every node
/// appears at least once and the deficit is filled with replacement.
pub fn resample_fixed(available: usize, target: usize, seed: u64) -> Vec<usize> {
    assert!(available >= 1 && target >= 1, "resample_fixed needs M, N ≥ 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if available >= target {
        index::sample(&mut rng, available, target).into_vec()
    } else {
        let mut idx: Vec<usize> = (0..available).collect();
        idx.extend((available..target).map(|_| rng.gen_range(0..available)));
        idx.shuffle(&mut rng);
        idx
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_sizes_give_a_permutation() {
        let mut idx = resample_fixed(5, 5, 11);
        idx.sort_unstable();
        assert_eq!(idx, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn deficit_covers_every_node() {
        for seed in 0..50 {
            let idx = resample_fixed(3, 5, seed);
            assert_eq!(idx.len(), 5);
            for k in 0..3 {
                assert!(idx.contains(&k));
            }
        }
    }

    #[test]
    fn degenerate_shape_is_reported() {
        // negative radius: nothing is ever inside
        let empty = Shape::Sphere {
            center: [0.0; 3],
            radius: -1.0,
        };
        match sample_volume(&empty, 10, 0) {
            Err(Error::DegenerateShape { proposals, .. }) => {
                assert_eq!(proposals, DEGENERATE_PROPOSALS)
            }
            other => panic!("{other:?}"),
        }
        let unit = Shape::Sphere {
            center: [0.0; 3],
            radius: 1.0,
        };
        assert!(sample_volume(&unit, 0, 0).is_err());
    }

    #[test]
    fn mesh_sampling_stays_inside() {
        let cube = Shape::Mesh(crate::geometry::TriMesh::cuboid([0.0; 3], [1.0, 0.5, 0.25]));
        let ps = sample_volume(&cube, 200, 4).unwrap();
        assert!(ps.sdf.iter().all(|&d| d <= 0.0));
    }
}
