use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::vec3::{add, cross, dot, norm, normalized, scale, sub, Aabb, Vec3};
use crate::error::{Error, Result};

/// Closed, consistently oriented triangle mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMesh", into = "RawMesh")]
pub struct TriMesh {
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
    bounds: Aabb,
}

#[derive(Serialize, Deserialize)]
struct RawMesh {
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
}

impl TryFrom<RawMesh> for TriMesh {
    type Error = Error;

    fn try_from(raw: RawMesh) -> Result<Self> {
        TriMesh::new(raw.vertices, raw.faces)
    }
}

impl From<TriMesh> for RawMesh {
    fn from(m: TriMesh) -> Self {
        RawMesh {
            vertices: m.vertices,
            faces: m.faces,
        }
    }
}

impl TriMesh {
    /// Validate indices and topology: every edge must be shared by exactly two
    /// faces, traversed in opposite directions.
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        if faces.is_empty() {
            return Err(Error::Topology("mesh has no faces".into()));
        }
        for (fi, f) in faces.iter().enumerate() {
            if let Some(&v) = f.iter().find(|&&v| v >= vertices.len()) {
                return Err(Error::Topology(format!(
                    "face {fi} references vertex {v}, mesh has {}",
                    vertices.len()
                )));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::Topology(format!("face {fi} repeats a vertex")));
            }
        }
        let mut undirected: HashMap<(usize, usize), u32> = HashMap::new();
        let mut directed: HashMap<(usize, usize), u32> = HashMap::new();
        for f in &faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                *undirected.entry((a.min(b), a.max(b))).or_default() += 1;
                *directed.entry((a, b)).or_default() += 1;
            }
        }
        let mut open: Vec<_> = undirected.iter().filter(|(_, &c)| c != 2).collect();
        if !open.is_empty() {
            open.sort();
            let ((a, b), c) = open[0];
            return Err(Error::Topology(format!(
                "not closed: edge ({a}, {b}) shared by {c} faces ({} bad edges)",
                open.len()
            )));
        }
        if let Some(((a, b), _)) = directed.iter().find(|(_, &c)| c != 1) {
            return Err(Error::Topology(format!(
                "inconsistent orientation at edge ({a}, {b})"
            )));
        }
        let bounds = Aabb::from_points(&vertices);
        Ok(Self {
            vertices,
            faces,
            bounds,
        })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn bounds(&self) -> Aabb {
        self.bounds
    }

    fn triangle(&self, f: &[usize; 3]) -> (Vec3, Vec3, Vec3) {
        (self.vertices[f[0]], self.vertices[f[1]], self.vertices[f[2]])
    }

    /// Unsigned distance to the nearest triangle.
    pub fn distance(&self, p: Vec3) -> f64 {
        self.faces
            .iter()
            .map(|f| {
                let (a, b, c) = self.triangle(f);
                norm(sub(p, closest_point_on_triangle(p, a, b, c)))
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Generalized winding number: ±1 inside a closed mesh, 0 outside.
    pub fn winding_number(&self, p: Vec3) -> f64 {
        let total: f64 = self
            .faces
            .iter()
            .map(|f| {
                let (a, b, c) = self.triangle(f);
                solid_angle(sub(a, p), sub(b, p), sub(c, p))
            })
            .sum();
        total / (4.0 * PI)
    }

    /// Signed distance, negative inside; inside iff |winding| ≥ 0.5.
    pub fn sdf(&self, p: Vec3) -> f64 {
        let d = self.distance(p);
        if d == 0.0 {
            return 0.0;
        }
        if self.winding_number(p).abs() >= 0.5 {
            -d
        } else {
            d
        }
    }

    /// Icosahedron refined `subdivisions` times and projected onto a sphere.
    pub fn icosphere(center: Vec3, radius: f64, subdivisions: u32) -> Self {
        let t = (1.0 + 5f64.sqrt()) / 2.0;
        let mut vertices: Vec<Vec3> = [
            [-1.0, t, 0.0],
            [1.0, t, 0.0],
            [-1.0, -t, 0.0],
            [1.0, -t, 0.0],
            [0.0, -1.0, t],
            [0.0, 1.0, t],
            [0.0, -1.0, -t],
            [0.0, 1.0, -t],
            [t, 0.0, -1.0],
            [t, 0.0, 1.0],
            [-t, 0.0, -1.0],
            [-t, 0.0, 1.0],
        ]
        .into_iter()
        .map(normalized)
        .collect();
        let mut faces: Vec<[usize; 3]> = vec![
            [0, 11, 5],
            [0, 5, 1],
            [0, 1, 7],
            [0, 7, 10],
            [0, 10, 11],
            [1, 5, 9],
            [5, 11, 4],
            [11, 10, 2],
            [10, 7, 6],
            [7, 1, 8],
            [3, 9, 4],
            [3, 4, 2],
            [3, 2, 6],
            [3, 6, 8],
            [3, 8, 9],
            [4, 9, 5],
            [2, 4, 11],
            [6, 2, 10],
            [8, 6, 7],
            [9, 8, 1],
        ];
        for _ in 0..subdivisions {
            let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
            let mut mid = |a: usize, b: usize, verts: &mut Vec<Vec3>| {
                *midpoints.entry((a.min(b), a.max(b))).or_insert_with(|| {
                    verts.push(normalized(scale(add(verts[a], verts[b]), 0.5)));
                    verts.len() - 1
                })
            };
            let mut next = Vec::with_capacity(faces.len() * 4);
            for [a, b, c] in faces {
                let ab = mid(a, b, &mut vertices);
                let bc = mid(b, c, &mut vertices);
                let ca = mid(c, a, &mut vertices);
                next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
            }
            faces = next;
        }
        let vertices = vertices
            .into_iter()
            .map(|v| add(center, scale(v, radius)))
            .collect();
        Self::new(vertices, faces).expect("icosphere is closed")
    }

    /// Axis-aligned box with outward-facing triangles.
    pub fn cuboid(center: Vec3, half_extents: Vec3) -> Self {
        let vertices = (0..8)
            .map(|i| {
                std::array::from_fn(|k| {
                    let sign = if (i >> k) & 1 == 1 { 1.0 } else { -1.0 };
                    center[k] + sign * half_extents[k]
                })
            })
            .collect();
        let faces = vec![
            [0, 4, 6],
            [0, 6, 2],
            [1, 3, 7],
            [1, 7, 5],
            [0, 1, 5],
            [0, 5, 4],
            [2, 6, 7],
            [2, 7, 3],
            [0, 2, 3],
            [0, 3, 1],
            [4, 5, 7],
            [4, 7, 6],
        ];
        Self::new(vertices, faces).expect("cuboid is closed")
    }

    /// Parse the `v` / `f` subset of Wavefront OBJ. Faces must be triangles;
    /// `f a/b/c` forms use the position index only; negative indices are relative.
    pub fn from_obj(text: &str) -> Result<Self> {
        let mut vertices = Vec::new();
        let mut faces = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line_no = ln + 1;
            let err = |msg: String| Error::Obj { line: line_no, msg };
            let mut tok = line.split_whitespace();
            match tok.next() {
                Some("v") => {
                    let mut p = [0.0; 3];
                    for slot in &mut p {
                        let s = tok.next().ok_or_else(|| err("vertex needs 3 coordinates".into()))?;
                        *slot = s.parse().map_err(|_| err(format!("bad coordinate `{s}`")))?;
                    }
                    vertices.push(p);
                }
                Some("f") => {
                    let idx: Vec<&str> = tok.collect();
                    if idx.len() != 3 {
                        return Err(err(format!("only triangles are supported, got {} vertices", idx.len())));
                    }
                    let mut f = [0usize; 3];
                    for (slot, s) in f.iter_mut().zip(idx) {
                        let head = s.split('/').next().unwrap_or("");
                        let i: i64 = head.parse().map_err(|_| err(format!("bad index `{s}`")))?;
                        let resolved = match i {
                            0 => return Err(err("index 0 is invalid".into())),
                            i if i > 0 => i - 1,
                            i => vertices.len() as i64 + i,
                        };
                        if resolved < 0 || resolved as usize >= vertices.len() {
                            return Err(err(format!("index {i} out of range")));
                        }
                        *slot = resolved as usize;
                    }
                    faces.push(f);
                }
                _ => {}
            }
        }
        Self::new(vertices, faces)
    }

    pub fn to_obj(&self) -> String {
        let mut s = String::new();
        for v in &self.vertices {
            let _ = writeln!(s, "v {} {} {}", v[0], v[1], v[2]);
        }
        for f in &self.faces {
            let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
        }
        s
    }
}

/// Signed solid angle of triangle `(a, b, c)` seen from the origin.
fn solid_angle(a: Vec3, b: Vec3, c: Vec3) -> f64 {
    let (la, lb, lc) = (norm(a), norm(b), norm(c));
    let num = dot(a, cross(b, c));
    let den = la * lb * lc + dot(a, b) * lc + dot(b, c) * la + dot(c, a) * lb;
    2.0 * num.atan2(den)
}

/// Closest point to `p` on triangle `abc` (Voronoi-region walk).
pub fn closest_point_on_triangle(p: Vec3, a: Vec3, b: Vec3, c: Vec3) -> Vec3 {
    let ab = sub(b, a);
    let ac = sub(c, a);
    let ap = sub(p, a);
    let d1 = dot(ab, ap);
    let d2 = dot(ac, ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }
    let bp = sub(p, b);
    let d3 = dot(ab, bp);
    let d4 = dot(ac, bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return add(a, scale(ab, v));
    }
    let cp = sub(p, c);
    let d5 = dot(ab, cp);
    let d6 = dot(ac, cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return add(a, scale(ac, w));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return add(b, scale(sub(c, b), w));
    }
    let denom = 1.0 / (va + vb + vc);
    add(a, add(scale(ab, vb * denom), scale(ac, vc * denom)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Shape;

    #[test]
    fn vertex_probe_is_zero() {
        let m = TriMesh::icosphere([0.0; 3], 1.0, 1);
        for &v in m.vertices().iter().take(10) {
            assert_eq!(m.sdf(v), 0.0);
        }
    }

    #[test]
    fn icosphere_center_depth() {
        let m = TriMesh::icosphere([0.0; 3], 1.0, 3);
        assert_eq!(m.faces().len(), 1280);
        let d = m.sdf([0.0; 3]);
        assert!((d + 1.0).abs() < 0.02, "{d}");
        assert!((m.winding_number([0.0; 3]) - 1.0).abs() < 1e-9);
        assert!(m.winding_number([3.0, 0.0, 0.0]).abs() < 1e-9);
    }

    #[test]
    fn cube_interior_matches_analytic_box() {
        let center = [0.5, -0.25, 1.0];
        let half = [1.0, 0.5, 2.0];
        let m = TriMesh::cuboid(center, half);
        let b = Shape::Box {
            center,
            half_extents: half,
        };
        for p in [[0.5, -0.25, 1.0], [1.2, 0.0, 2.5], [-0.3, -0.6, -0.5], [1.4, 0.2, 2.9]] {
            assert!((m.sdf(p) - b.sdf(p)).abs() < 1e-9);
            assert!(m.sdf(p) < 0.0);
        }
        for p in [[3.0, 0.0, 0.0], [0.5, 1.0, 1.0], [2.0, 2.0, 4.0]] {
            assert!((m.sdf(p) - b.sdf(p)).abs() < 1e-9);
        }
    }

    #[test]
    fn open_mesh_is_rejected() {
        let m = TriMesh::cuboid([0.0; 3], [1.0; 3]);
        let mut faces = m.faces().to_vec();
        faces.pop();
        let err = TriMesh::new(m.vertices().to_vec(), faces).unwrap_err();
        assert!(matches!(err, Error::Topology(_)), "{err}");
    }

    #[test]
    fn flipped_face_is_rejected() {
        let m = TriMesh::cuboid([0.0; 3], [1.0; 3]);
        let mut faces = m.faces().to_vec();
        faces[0].swap(1, 2);
        assert!(matches!(
            TriMesh::new(m.vertices().to_vec(), faces),
            Err(Error::Topology(_))
        ));
    }

    #[test]
    fn obj_round_trip_and_errors() {
        let m = TriMesh::icosphere([0.0; 3], 2.0, 1);
        let back = TriMesh::from_obj(&m.to_obj()).unwrap();
        assert_eq!(back.faces(), m.faces());
        assert_eq!(back.vertices(), m.vertices());

        let quad = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n";
        assert!(matches!(TriMesh::from_obj(quad), Err(Error::Obj { line: 5, .. })));
        let bad = "v 0 0 0\nv 1 0 0\nv 1 1 0\nf 1 2 9\n";
        assert!(matches!(TriMesh::from_obj(bad), Err(Error::Obj { line: 4, .. })));
        let slashes = "# tetra\nv 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\n\
                       f 1/1/1 3/3/3 2/2/2\nf 1 2 4\nf -3 -2 -1\nf 1 4 3\n";
        let tet = TriMesh::from_obj(slashes).unwrap();
        assert!(tet.sdf([0.1, 0.1, 0.1]) < 0.0);
        assert!(tet.sdf([1.0, 1.0, 1.0]) > 0.0);
    }

    #[test]
    fn closest_point_regions() {
        let (a, b, c) = ([0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]);
        assert_eq!(closest_point_on_triangle([-1.0, -1.0, 0.0], a, b, c), a);
        assert_eq!(closest_point_on_triangle([2.0, -0.5, 0.0], a, b, c), b);
        assert_eq!(closest_point_on_triangle([0.25, 0.25, 3.0], a, b, c), [0.25, 0.25, 0.0]);
        assert_eq!(closest_point_on_triangle([0.5, -2.0, 0.0], a, b, c), [0.5, 0.0, 0.0]);
        let q = closest_point_on_triangle([1.0, 1.0, 0.0], a, b, c);
        assert!((q[0] - 0.5).abs() < 1e-15 && (q[1] - 0.5).abs() < 1e-15);
    }
}
