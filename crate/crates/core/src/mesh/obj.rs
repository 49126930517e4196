//! Wavefront OBJ subset: `v` and `f` records. Polygonal faces are
//! fan-triangulated; texture, normal, grouping and material records are
//! ignored.

use super::{MeshError, TriangleMesh};
use nalgebra::Vector3;
use std::fmt::Write as _;

pub fn parse_obj(text: &str, label: impl Into<String>) -> Result<TriangleMesh, MeshError> {
    let mut vertices: Vec<Vector3<f64>> = Vec::new();
    let mut triangles: Vec<[usize; 3]> = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        let mut fields = content.split_whitespace();
        let Some(tag) = fields.next() else { continue };
        match tag {
            "v" => {
                let coords: Vec<f64> = fields
                    .take(3)
                    .map(|f| {
                        f.parse::<f64>().map_err(|e| MeshError::Parse {
                            line,
                            message: format!("bad vertex coordinate `{f}`: {e}"),
                        })
                    })
                    .collect::<Result<_, _>>()?;
                if coords.len() != 3 {
                    return Err(MeshError::Parse {
                        line,
                        message: "vertex needs three coordinates".into(),
                    });
                }
                vertices.push(Vector3::new(coords[0], coords[1], coords[2]));
            }
            "f" => {
                let idx: Vec<usize> = fields
                    .map(|f| resolve_index(f, vertices.len(), line))
                    .collect::<Result<_, _>>()?;
                if idx.len() < 3 {
                    return Err(MeshError::Parse {
                        line,
                        message: format!("face has {} vertices", idx.len()),
                    });
                }
                for k in 1..idx.len() - 1 {
                    triangles.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    TriangleMesh::new(vertices, triangles, label)
}

/// OBJ face indices are 1-based; negative values count back from the most
/// recent vertex. Only the position index of `v/vt/vn` is used.
fn resolve_index(field: &str, count: usize, line: usize) -> Result<usize, MeshError> {
    let head = field.split('/').next().unwrap_or("");
    let i: i64 = head.parse().map_err(|_| MeshError::Parse {
        line,
        message: format!("bad face index `{field}`"),
    })?;
    let resolved = if i > 0 {
        i - 1
    } else if i < 0 {
        count as i64 + i
    } else {
        -1
    };
    if resolved < 0 || resolved as usize >= count {
        return Err(MeshError::Parse {
            line,
            message: format!("face index {i} out of range ({count} vertices so far)"),
        });
    }
    Ok(resolved as usize)
}

/// Serializes vertices with 17 significant digits, so a write/read cycle
/// reproduces coordinates exactly.
pub fn write_obj(mesh: &TriangleMesh) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# {}", mesh.label());
    for v in mesh.vertices() {
        let _ = writeln!(out, "v {:.16e} {:.16e} {:.16e}", v.x, v.y, v.z);
    }
    for t in mesh.triangles() {
        let _ = writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::fixtures::{icosphere, torus};
    use crate::mesh::mesh_volume;
    use proptest::prelude::*;

    const CUBE_QUADS: &str = "\
# unit cube
o cube
v 0 0 0
v 1 0 0
v 1 1 0
v 0 1 0
v 0 0 1
v 1 0 1
v 1 1 1
v 0 1 1
vn 0 0 1
f 1 4 3 2
f 5 6 7 8
f 1 2 6 5
f 2 3 7 6
f 3 4 8 7
f 4/1/1 1/2/1 5/3/1 -1/4/1
";

    #[test]
    fn unit_cube_with_quads() {
        let m = parse_obj(CUBE_QUADS, "cube").unwrap();
        assert_eq!(m.vertices().len(), 8);
        assert_eq!(m.triangles().len(), 12);
        assert!(m.is_watertight());
        assert!((mesh_volume(&m).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn missing_face_flags_open_mesh() {
        let text: String = CUBE_QUADS.lines().filter(|l| *l != "f 5 6 7 8").collect::<Vec<_>>().join("\n");
        let m = parse_obj(&text, "cube").unwrap();
        assert!(!m.is_watertight());
        assert!(mesh_volume(&m).is_err());
    }

    #[test]
    fn parse_errors_name_the_line() {
        let err = parse_obj("v 0 0 0\nv 1 0 x\n", "x").unwrap_err();
        assert!(matches!(err, MeshError::Parse { line: 2, .. }));
        let err = parse_obj("v 0 0 0\nf 1 2 3\n", "x").unwrap_err();
        assert!(matches!(err, MeshError::Parse { line: 2, .. }));
    }

    #[test]
    fn round_trip_fixtures() {
        for m in [icosphere(2.5, 2), torus(3.0, 1.2, 20, 10)] {
            let back = parse_obj(&write_obj(&m), m.label()).unwrap();
            assert_eq!(back.vertices(), m.vertices());
            assert_eq!(back.triangles(), m.triangles());
        }
    }

    proptest! {
        #[test]
        fn round_trip_arbitrary_coordinates(
            coords in proptest::collection::vec(-1e6f64..1e6, 12),
        ) {
            let verts: Vec<_> = coords.chunks(3).map(|c| Vector3::new(c[0], c[1], c[2])).collect();
            let tris = vec![[0, 1, 2], [0, 3, 1], [1, 3, 2], [2, 3, 0]];
            let m = TriangleMesh::new(verts, tris, "tet").unwrap();
            let back = parse_obj(&write_obj(&m), "tet").unwrap();
            prop_assert_eq!(back.vertices(), m.vertices());
            prop_assert_eq!(back.triangles(), m.triangles());
        }
    }
}
