//! Untextured silhouette rasterization of a posed mesh.
//!
//! Pixel centres sit on integer coordinates. A pixel is foreground when its
//! centre lies inside at least one projected triangle, with the top-left
//! rule deciding centres that fall exactly on an edge. There is no depth
//! buffer: the output is the union of all triangle footprints.

use crate::geometry::{CameraIntrinsics, RigidTransform, MIN_DEPTH};
use crate::mask::{PixelRect, Silhouette};
use crate::mesh::TriangleMesh;
use image::{Rgb, RgbImage};
use nalgebra::{Matrix3x4, Vector2, Vector4};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RenderError {
    #[error("no triangle in front of the camera ({discarded} discarded)")]
    EmptyRender { discarded: usize },
    #[error("invalid render target: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone)]
pub struct RenderOutput {
    pub silhouette: Silhouette,
    /// Triangles rasterized.
    pub kept: usize,
    /// Triangles dropped for having a vertex at non-positive depth.
    pub discarded: usize,
    /// Rectangle containing every foreground pixel, if any were drawn.
    pub bounds: Option<PixelRect>,
}

/// `P = K [R | t]`.
pub fn projection_matrix(k: &CameraIntrinsics, extrinsics: &RigidTransform) -> Matrix3x4<f64> {
    let mut rt = Matrix3x4::zeros();
    rt.fixed_view_mut::<3, 3>(0, 0).copy_from(&extrinsics.rotation);
    rt.set_column(3, &extrinsics.translation);
    k.matrix() * rt
}

/// Signed doubled area of `(a, b, p)`. Evaluated with the edge endpoints in
/// a fixed order so the two triangles sharing an edge see exactly negated
/// values.
fn edge(a: &Vector2<f64>, b: &Vector2<f64>, px: f64, py: f64) -> f64 {
    let raw = |a: &Vector2<f64>, b: &Vector2<f64>| (b.x - a.x) * (py - a.y) - (b.y - a.y) * (px - a.x);
    if (a.x, a.y) <= (b.x, b.y) {
        raw(a, b)
    } else {
        -raw(b, a)
    }
}

/// Whether a centre lying exactly on edge `a → b` belongs to the triangle.
/// With positive-area winding, every shared edge is owned by exactly one
/// of its two triangles.
fn is_top_left(a: &Vector2<f64>, b: &Vector2<f64>) -> bool {
    (a.y == b.y && b.x > a.x) || b.y < a.y
}

pub fn render_silhouette(
    mesh: &TriangleMesh,
    p: &Matrix3x4<f64>,
    width: usize,
    height: usize,
) -> Result<RenderOutput, RenderError> {
    let mut silhouette = Silhouette::new(width, height)
        .map_err(|e| RenderError::InvalidArgument(e.to_string()))?;

    let projected: Vec<Option<Vector2<f64>>> = mesh
        .vertices()
        .iter()
        .map(|v| {
            let h = p * Vector4::new(v.x, v.y, v.z, 1.0);
            (h.z > MIN_DEPTH).then(|| Vector2::new(h.x / h.z, h.y / h.z))
        })
        .collect();

    // On a closed, outward-oriented surface every silhouette point is
    // covered by a front face, so back faces can be skipped.
    let topology = mesh.topology();
    let cull = topology.is_watertight() && topology.is_consistently_oriented() && mesh.signed_volume() > 0.0;

    let (mut kept, mut discarded) = (0, 0);
    let mut bounds: Option<PixelRect> = None;
    for tri in mesh.triangles() {
        let (Some(a), Some(b), Some(c)) = (projected[tri[0]], projected[tri[1]], projected[tri[2]]) else {
            discarded += 1;
            continue;
        };
        kept += 1;
        if cull && edge(&a, &b, c.x, c.y) > 0.0 {
            continue;
        }
        if let Some(r) = rasterize(&mut silhouette, a, b, c) {
            bounds = Some(bounds.map_or(r, |b| b.union(&r)));
        }
    }

    if kept == 0 {
        return Err(RenderError::EmptyRender { discarded });
    }
    if discarded > 0 {
        log::warn!("{discarded} triangles behind the camera were discarded");
    }
    if bounds.is_none() {
        log::warn!("rendered silhouette falls entirely outside the {width}x{height} image");
    }
    Ok(RenderOutput {
        silhouette,
        kept,
        discarded,
        bounds,
    })
}

/// Returns the rectangle spanned by the pixels drawn, if any.
fn rasterize(out: &mut Silhouette, a: Vector2<f64>, b: Vector2<f64>, c: Vector2<f64>) -> Option<PixelRect> {
    let area = edge(&a, &b, c.x, c.y);
    if area == 0.0 || !area.is_finite() {
        return None;
    }
    let (a, b, c) = if area > 0.0 { (a, b, c) } else { (a, c, b) };

    let (w, h) = (out.width() as f64, out.height() as f64);
    let u0 = a.x.min(b.x).min(c.x).ceil().max(0.0);
    let u1 = a.x.max(b.x).max(c.x).floor().min(w - 1.0);
    let v0 = a.y.min(b.y).min(c.y).ceil().max(0.0);
    let v1 = a.y.max(b.y).max(c.y).floor().min(h - 1.0);
    if u0 > u1 || v0 > v1 {
        return None;
    }

    let edges = [(b, c), (c, a), (a, b)];
    let owns = edges.map(|(p, q)| is_top_left(&p, &q));
    let mut drawn: Option<PixelRect> = None;
    for v in v0 as usize..=v1 as usize {
        let py = v as f64;
        let mut span: Option<(usize, usize)> = None;
        for u in u0 as usize..=u1 as usize {
            let px = u as f64;
            let inside = edges.iter().zip(owns).all(|((p, q), own)| {
                let e = edge(p, q, px, py);
                e > 0.0 || (e == 0.0 && own)
            });
            if inside {
                out.set(u, v, true);
                span = Some(span.map_or((u, u), |(lo, _)| (lo, u)));
            }
        }
        if let Some((lo, hi)) = span {
            let row = PixelRect { u0: lo, v0: v, u1: hi, v1: v };
            drawn = Some(drawn.map_or(row, |d| d.union(&row)));
        }
    }
    drawn
}

/// Draws the boundary of `silhouette` in `color` over `base`.
pub fn overlay_boundary(base: &RgbImage, silhouette: &Silhouette, color: [u8; 3]) -> RgbImage {
    let mut out = base.clone();
    let boundary = silhouette.boundary();
    for (u, v) in boundary.foreground() {
        if (u as u32) < out.width() && (v as u32) < out.height() {
            out.put_pixel(u as u32, v as u32, Rgb(color));
        }
    }
    out
}

/// Grey rendering of a mask, usable as an overlay background when no RGB
/// image is available.
pub fn mask_as_rgb(mask: &Silhouette) -> RgbImage {
    RgbImage::from_fn(mask.width() as u32, mask.height() as u32, |u, v| {
        if mask.get(u as usize, v as usize) {
            Rgb([160, 160, 160])
        } else {
            Rgb([32, 32, 32])
        }
    })
}
