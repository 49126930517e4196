//! Triangle meshes: the reference 3D models whose volume is rescaled.
//!
//! Vertex positions are centimetres, so volumes come out in cm³ = mL.

mod db;
pub mod fixtures;
mod obj;

pub use db::MeshDb;
pub use obj::{parse_obj, write_obj};

use crate::geometry::rotation_about_z;
use crate::objectpose::ObjectPose;
use nalgebra::Vector3;
use std::collections::HashMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("OBJ parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("face {face} references vertex {index} but the mesh has {count} vertices")]
    IndexOutOfRange { face: usize, index: usize, count: usize },
    #[error("mesh needs at least 4 triangles, found {0}")]
    TooFewTriangles(usize),
    #[error("non-finite vertex coordinate at vertex {0}")]
    NonFinite(usize),
    #[error(
        "volume undefined: mesh is not a closed consistently oriented surface \
         ({boundary_edges} boundary, {nonmanifold_edges} non-manifold, {misoriented_edges} misoriented edges)"
    )]
    VolumeUndefined {
        boundary_edges: usize,
        nonmanifold_edges: usize,
        misoriented_edges: usize,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("mesh database: {0}")]
    Database(String),
}

/// Edge-incidence summary of a triangle mesh.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Topology {
    /// Edges used by exactly one triangle.
    pub boundary_edges: usize,
    /// Edges used by three or more triangles.
    pub nonmanifold_edges: usize,
    /// Two-triangle edges traversed in the same direction by both.
    pub misoriented_edges: usize,
}

impl Topology {
    pub fn is_watertight(&self) -> bool {
        self.boundary_edges == 0 && self.nonmanifold_edges == 0
    }

    pub fn is_consistently_oriented(&self) -> bool {
        self.misoriented_edges == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Vector3<f64>>,
    triangles: Vec<[usize; 3]>,
    label: String,
    topology: Topology,
}

impl TriangleMesh {
    /// Validates indices and coordinates and records the edge topology.
    /// Open or non-manifold meshes are accepted; volume queries on them fail.
    pub fn new(
        vertices: Vec<Vector3<f64>>,
        triangles: Vec<[usize; 3]>,
        label: impl Into<String>,
    ) -> Result<Self, MeshError> {
        if triangles.len() < 4 {
            return Err(MeshError::TooFewTriangles(triangles.len()));
        }
        if let Some(i) = vertices.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(MeshError::NonFinite(i));
        }
        for (face, tri) in triangles.iter().enumerate() {
            if let Some(&index) = tri.iter().find(|&&i| i >= vertices.len()) {
                return Err(MeshError::IndexOutOfRange {
                    face,
                    index,
                    count: vertices.len(),
                });
            }
        }
        let topology = analyze_topology(&triangles);
        Ok(Self {
            vertices,
            triangles,
            label: label.into(),
            topology,
        })
    }

    pub fn load(path: &Path) -> Result<Self, MeshError> {
        let text = std::fs::read_to_string(path).map_err(|source| MeshError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let label = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let mesh = parse_obj(&text, label)?;
        if !mesh.topology.is_watertight() {
            log::warn!(
                "{} is not watertight ({} boundary, {} non-manifold edges); volume queries will fail",
                path.display(),
                mesh.topology.boundary_edges,
                mesh.topology.nonmanifold_edges
            );
        }
        Ok(mesh)
    }

    pub fn vertices(&self) -> &[Vector3<f64>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    pub fn is_watertight(&self) -> bool {
        self.topology.is_watertight()
    }

    /// Applies `f` to every vertex, keeping connectivity.
    pub fn map_vertices(&self, f: impl Fn(&Vector3<f64>) -> Vector3<f64>) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(f).collect(),
            triangles: self.triangles.clone(),
            label: self.label.clone(),
            topology: self.topology,
        }
    }

    /// Uniform scaling about the origin (e.g. a unit conversion).
    pub fn scaled(&self, factor: f64) -> Result<TriangleMesh, MeshError> {
        if !(factor > 0.0) || !factor.is_finite() {
            return Err(MeshError::InvalidArgument(format!("scale must be positive, got {factor}")));
        }
        Ok(self.map_vertices(|v| v * factor))
    }

    pub fn signed_volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let [a, b, c] = t.map(|i| self.vertices[i]);
                a.dot(&b.cross(&c))
            })
            .sum::<f64>()
            / 6.0
    }

    /// Centroid of the enclosed solid for closed meshes; vertex mean
    /// otherwise.
    pub fn centroid(&self) -> Vector3<f64> {
        let v6 = self.signed_volume() * 6.0;
        if self.topology.is_watertight() && v6.abs() > 0.0 {
            let mut acc = Vector3::zeros();
            for t in &self.triangles {
                let [a, b, c] = t.map(|i| self.vertices[i]);
                acc += (a + b + c) * a.dot(&b.cross(&c));
            }
            acc / (4.0 * v6)
        } else {
            self.vertices.iter().fold(Vector3::zeros(), |a, v| a + v) / self.vertices.len() as f64
        }
    }

    pub fn bounds(&self) -> (Vector3<f64>, Vector3<f64>) {
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for v in &self.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        (lo, hi)
    }
}

fn analyze_topology(triangles: &[[usize; 3]]) -> Topology {
    // undirected edge -> (uses, uses in the (min, max) direction)
    let mut edges: HashMap<(usize, usize), (usize, usize)> = HashMap::new();
    for t in triangles {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            let key = (a.min(b), a.max(b));
            let e = edges.entry(key).or_insert((0, 0));
            e.0 += 1;
            if a < b {
                e.1 += 1;
            }
        }
    }
    let mut topo = Topology::default();
    for (uses, forward) in edges.values() {
        match uses {
            1 => topo.boundary_edges += 1,
            2 => {
                if *forward != 1 {
                    topo.misoriented_edges += 1;
                }
            }
            _ => topo.nonmanifold_edges += 1,
        }
    }
    topo
}

/// Enclosed volume `|Σ v0·(v1×v2)| / 6` in mL.
pub fn mesh_volume(mesh: &TriangleMesh) -> Result<f64, MeshError> {
    let t = mesh.topology;
    if !t.is_watertight() || !t.is_consistently_oriented() {
        return Err(MeshError::VolumeUndefined {
            boundary_edges: t.boundary_edges,
            nonmanifold_edges: t.nonmanifold_edges,
            misoriented_edges: t.misoriented_edges,
        });
    }
    Ok(mesh.signed_volume().abs())
}

/// Moves the mesh so its centroid sits on the `Z` axis and its lowest point
/// on the `Z = 0` plane.
pub fn canonicalize(mesh: &TriangleMesh) -> TriangleMesh {
    let c = mesh.centroid();
    let (lo, _) = mesh.bounds();
    let offset = Vector3::new(c.x, c.y, lo.z);
    mesh.map_vertices(|v| v - offset)
}

/// Scales about the origin, rotates by `θz` about `+Z`, then translates by
/// `(tx, ty, 0)`.
pub fn apply_object_pose(mesh: &TriangleMesh, pose: &ObjectPose, scale: f64) -> Result<TriangleMesh, MeshError> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(MeshError::InvalidArgument(format!("scale must be positive, got {scale}")));
    }
    let r = rotation_about_z(pose.theta_z);
    let t = Vector3::new(pose.tx, pose.ty, 0.0);
    Ok(mesh.map_vertices(|v| r * (v * scale) + t))
}

#[cfg(test)]
mod tests {
    use super::fixtures::{cube, icosphere, torus};
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cube_volume() {
        let c = cube(1.0);
        assert!(c.is_watertight());
        assert!((mesh_volume(&c).unwrap() - 1.0).abs() < 1e-9);
        assert!((mesh_volume(&cube(2.0)).unwrap() - 8.0).abs() < 1e-9);
        let scaled = c.scaled(2.0).unwrap();
        assert!((mesh_volume(&scaled).unwrap() - 8.0).abs() < 1e-9);
    }

    #[test]
    fn icosphere_volume_converges() {
        let exact = 4.0 * std::f64::consts::PI / 3.0;
        let v4 = mesh_volume(&icosphere(1.0, 4)).unwrap();
        assert!(((v4 - exact) / exact).abs() < 0.005, "{v4}");
        // The inscribed polyhedron always underestimates and refines monotonically.
        let v3 = mesh_volume(&icosphere(1.0, 3)).unwrap();
        assert!(v3 < v4 && v4 < exact);
    }

    #[test]
    fn open_mesh_rejected() {
        let c = cube(1.0);
        let mut tris = c.triangles().to_vec();
        tris.pop();
        let open = TriangleMesh::new(c.vertices().to_vec(), tris, "open").unwrap();
        assert!(!open.is_watertight());
        assert!(matches!(mesh_volume(&open), Err(MeshError::VolumeUndefined { boundary_edges: 3, .. })));
    }

    #[test]
    fn misoriented_face_rejected() {
        let c = cube(1.0);
        let mut tris = c.triangles().to_vec();
        tris[0].swap(1, 2);
        let bad = TriangleMesh::new(c.vertices().to_vec(), tris, "flip").unwrap();
        assert!(bad.is_watertight());
        assert!(mesh_volume(&bad).is_err());
    }

    #[test]
    fn construction_errors() {
        let c = cube(1.0);
        assert!(matches!(
            TriangleMesh::new(c.vertices().to_vec(), c.triangles()[..3].to_vec(), "x"),
            Err(MeshError::TooFewTriangles(3))
        ));
        let mut tris = c.triangles().to_vec();
        tris[2][1] = 99;
        assert!(matches!(
            TriangleMesh::new(c.vertices().to_vec(), tris, "x"),
            Err(MeshError::IndexOutOfRange { face: 2, index: 99, .. })
        ));
    }

    #[test]
    fn canonicalize_examples() {
        let c = canonicalize(&cube(1.0));
        let again = canonicalize(&c);
        for (a, b) in c.vertices().iter().zip(again.vertices()) {
            assert!((a - b).amax() < 1e-12);
        }
        let moved = c.map_vertices(|v| v + Vector3::new(5.0, -3.0, 2.0));
        let back = canonicalize(&moved);
        for (a, b) in c.vertices().iter().zip(back.vertices()) {
            assert!((a - b).amax() < 1e-12);
        }
        let (lo, _) = back.bounds();
        assert!(lo.z.abs() < 1e-12);
    }

    #[test]
    fn pose_examples() {
        let c = canonicalize(&cube(1.0));
        let same = apply_object_pose(&c, &ObjectPose::default(), 1.0).unwrap();
        assert_eq!(same.vertices(), c.vertices());
        let big = apply_object_pose(&c, &ObjectPose::default(), 2.0).unwrap();
        assert!((mesh_volume(&big).unwrap() - 8.0).abs() < 1e-9);
        let posed = apply_object_pose(
            &c,
            &ObjectPose { tx: 2.4, ty: 0.0, theta_z: 30f64.to_radians() },
            1.0,
        )
        .unwrap();
        assert!((mesh_volume(&posed).unwrap() - mesh_volume(&c).unwrap()).abs() < 1e-12);
        assert!(apply_object_pose(&c, &ObjectPose::default(), 0.0).is_err());
        assert!(apply_object_pose(&c, &ObjectPose::default(), -1.0).is_err());
    }

    proptest! {
        #[test]
        fn pose_scales_volume_cubically(
            tx in -30.0f64..30.0, ty in -30.0f64..30.0, th in -1.57f64..1.57,
            s in 0.1f64..5.0, which in 0usize..3,
        ) {
            let m = canonicalize(&match which {
                0 => cube(3.0),
                1 => icosphere(2.0, 2),
                _ => torus(3.0, 1.0, 24, 12),
            });
            let v = mesh_volume(&m).unwrap();
            let posed = apply_object_pose(&m, &ObjectPose { tx, ty, theta_z: th }, s).unwrap();
            let vp = mesh_volume(&posed).unwrap();
            prop_assert!(((vp - s.powi(3) * v) / (s.powi(3) * v)).abs() < 1e-9);
        }

        #[test]
        fn canonicalize_idempotent(dx in -20.0f64..20.0, dy in -20.0f64..20.0, dz in -20.0f64..20.0) {
            let m = torus(3.0, 1.2, 16, 8).map_vertices(|v| v + Vector3::new(dx, dy, dz));
            let c1 = canonicalize(&m);
            let c2 = canonicalize(&c1);
            let centre = c1.centroid();
            prop_assert!(centre.x.abs() < 1e-12 && centre.y.abs() < 1e-12);
            prop_assert!(c1.bounds().0.z.abs() < 1e-12);
            for (a, b) in c1.vertices().iter().zip(c2.vertices()) {
                prop_assert!((a - b).amax() < 1e-12);
            }
        }

        #[test]
        fn volume_invariant_under_reindexing(seed in 0u64..1000) {
            use rand::{seq::SliceRandom, SeedableRng};
            let m = icosphere(1.5, 2);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut perm: Vec<usize> = (0..m.vertices().len()).collect();
            perm.shuffle(&mut rng);
            let mut verts = vec![Vector3::zeros(); perm.len()];
            for (old, &new) in perm.iter().enumerate() {
                verts[new] = m.vertices()[old];
            }
            let mut tris: Vec<[usize; 3]> = m.triangles().iter().map(|t| t.map(|i| perm[i])).collect();
            tris.shuffle(&mut rng);
            let re = TriangleMesh::new(verts, tris, "re").unwrap();
            let (a, b) = (mesh_volume(&m).unwrap(), mesh_volume(&re).unwrap());
            prop_assert!(((a - b) / a).abs() < 1e-12);
        }
    }
}
