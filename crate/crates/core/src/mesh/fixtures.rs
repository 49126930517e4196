//! Programmatic closed meshes, centred on the origin and outward-oriented.

use super::TriangleMesh;
use nalgebra::Vector3;
use std::collections::HashMap;

/// Flips triangles whose normal points toward the origin. Only valid for
/// shapes that are star-shaped about the origin.
fn orient_outward(vertices: &[Vector3<f64>], triangles: &mut [[usize; 3]]) {
    for t in triangles.iter_mut() {
        let [a, b, c] = t.map(|i| vertices[i]);
        let n = (b - a).cross(&(c - a));
        if n.dot(&(a + b + c)) < 0.0 {
            t.swap(1, 2);
        }
    }
}

/// Axis-aligned cube with edge length `side`: 8 vertices, 12 triangles.
pub fn cube(side: f64) -> TriangleMesh {
    let h = side / 2.0;
    let vertices: Vec<Vector3<f64>> = (0..8)
        .map(|i| {
            Vector3::new(
                if i & 1 != 0 { h } else { -h },
                if i & 2 != 0 { h } else { -h },
                if i & 4 != 0 { h } else { -h },
            )
        })
        .collect();
    let quads = [
        [0, 1, 3, 2],
        [4, 6, 7, 5],
        [0, 4, 5, 1],
        [2, 3, 7, 6],
        [0, 2, 6, 4],
        [1, 5, 7, 3],
    ];
    let mut triangles: Vec<[usize; 3]> = quads
        .iter()
        .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
        .collect();
    orient_outward(&vertices, &mut triangles);
    TriangleMesh::new(vertices, triangles, "cube").expect("cube fixture")
}

/// Box with the given edge lengths along X, Y and Z.
pub fn cuboid(x: f64, y: f64, z: f64) -> TriangleMesh {
    cube(1.0)
        .map_vertices(|v| Vector3::new(v.x * x, v.y * y, v.z * z))
        .with_label("cuboid")
}

/// Icosahedron subdivided `subdivisions` times and projected onto a sphere;
/// `20·4^subdivisions` triangles.
pub fn icosphere(radius: f64, subdivisions: u32) -> TriangleMesh {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vector3<f64>> = [
        (-1.0, phi, 0.0),
        (1.0, phi, 0.0),
        (-1.0, -phi, 0.0),
        (1.0, -phi, 0.0),
        (0.0, -1.0, phi),
        (0.0, 1.0, phi),
        (0.0, -1.0, -phi),
        (0.0, 1.0, -phi),
        (phi, 0.0, -1.0),
        (phi, 0.0, 1.0),
        (-phi, 0.0, -1.0),
        (-phi, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vector3::new(x, y, z).normalize())
    .collect();
    let mut triangles: Vec<[usize; 3]> = vec![
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
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<Vector3<f64>>| -> usize {
            *midpoints.entry((a.min(b), a.max(b))).or_insert_with(|| {
                verts.push(((verts[a] + verts[b]) / 2.0).normalize());
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(triangles.len() * 4);
        for [a, b, c] in triangles {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        triangles = next;
    }
    let vertices: Vec<_> = vertices.into_iter().map(|v| v * radius).collect();
    orient_outward(&vertices, &mut triangles);
    TriangleMesh::new(vertices, triangles, "icosphere").expect("icosphere fixture")
}

/// Torus lying in the XY plane around the Z axis.
pub fn torus(major_radius: f64, minor_radius: f64, major_segments: usize, minor_segments: usize) -> TriangleMesh {
    let (nu, nv) = (major_segments.max(3), minor_segments.max(3));
    let mut vertices = Vec::with_capacity(nu * nv);
    for i in 0..nu {
        let u = 2.0 * std::f64::consts::PI * i as f64 / nu as f64;
        for j in 0..nv {
            let v = 2.0 * std::f64::consts::PI * j as f64 / nv as f64;
            let ring = major_radius + minor_radius * v.cos();
            vertices.push(Vector3::new(ring * u.cos(), ring * u.sin(), minor_radius * v.sin()));
        }
    }
    let idx = |i: usize, j: usize| (i % nu) * nv + (j % nv);
    let mut triangles = Vec::with_capacity(2 * nu * nv);
    for i in 0..nu {
        for j in 0..nv {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    TriangleMesh::new(vertices, triangles, "torus").expect("torus fixture")
}
