//! Normalized DLT homography fitting.

use super::GeometryError;
use nalgebra::{DMatrix, Matrix3, Vector2, Vector3};

/// Projective map between two planes, normalized so `h[2][2] = 1` when that
/// entry is nonzero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography(Matrix3<f64>);

impl Homography {
    pub fn new(m: Matrix3<f64>) -> Result<Self, GeometryError> {
        let scale = m[(2, 2)];
        let m = if scale.abs() > f64::EPSILON * m.amax() { m / scale } else { m };
        let det = m.determinant();
        if !(det.abs() > 1e-12) || !det.is_finite() {
            return Err(GeometryError::DegenerateConfiguration(format!(
                "homography is singular (det = {det:e})"
            )));
        }
        Ok(Self(m))
    }

    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn inverse(&self) -> Result<Self, GeometryError> {
        let inv = self.0.try_inverse().ok_or_else(|| {
            GeometryError::DegenerateConfiguration("homography is not invertible".into())
        })?;
        Self::new(inv)
    }

    /// Homogeneous image of `p`; the third component is the projective weight.
    pub fn apply_homogeneous(&self, p: &Vector2<f64>) -> Vector3<f64> {
        self.0 * Vector3::new(p.x, p.y, 1.0)
    }

    /// Maps `p`, returning `None` when it lands on the line at infinity.
    pub fn apply(&self, p: &Vector2<f64>) -> Option<Vector2<f64>> {
        let h = self.apply_homogeneous(p);
        if h.z.abs() < 1e-12 {
            None
        } else {
            Some(Vector2::new(h.x / h.z, h.y / h.z))
        }
    }
}

/// A fitted homography together with its symmetric transfer error.
#[derive(Debug, Clone, Copy)]
pub struct HomographyFit {
    pub homography: Homography,
    /// Mean over point pairs of `|H·src − dst| + |H⁻¹·dst − src|`.
    pub mean_transfer_error: f64,
    /// Largest per-pair symmetric transfer error.
    pub max_transfer_error: f64,
}

/// Translate the centroid to the origin and scale so the mean distance from
/// it is √2.
fn normalizing_transform(pts: &[Vector2<f64>]) -> Matrix3<f64> {
    let n = pts.len() as f64;
    let c = pts.iter().fold(Vector2::zeros(), |acc, p| acc + p) / n;
    let mean_dist = pts.iter().map(|p| (p - c).norm()).sum::<f64>() / n;
    let s = if mean_dist > 0.0 {
        std::f64::consts::SQRT_2 / mean_dist
    } else {
        1.0
    };
    Matrix3::new(s, 0.0, -s * c.x, 0.0, s, -s * c.y, 0.0, 0.0, 1.0)
}

fn transform(t: &Matrix3<f64>, p: &Vector2<f64>) -> Vector2<f64> {
    let h = t * Vector3::new(p.x, p.y, 1.0);
    Vector2::new(h.x / h.z, h.y / h.z)
}

/// Fits `H` with `dst ≈ H·src` by normalized DLT: both point sets are
/// isotropically normalized, the stacked constraint matrix is solved for its
/// smallest right singular vector, and the result is denormalized.
pub fn fit_homography(src: &[Vector2<f64>], dst: &[Vector2<f64>]) -> Result<HomographyFit, GeometryError> {
    if src.len() != dst.len() {
        return Err(GeometryError::InvalidArgument(format!(
            "point count mismatch: {} source vs {} destination",
            src.len(),
            dst.len()
        )));
    }
    let n = src.len();
    if n < 4 {
        return Err(GeometryError::InsufficientData { needed: 4, got: n });
    }
    if src.iter().chain(dst.iter()).any(|p| !p.x.is_finite() || !p.y.is_finite()) {
        return Err(GeometryError::InvalidArgument("non-finite point coordinates".into()));
    }

    let t_src = normalizing_transform(src);
    let t_dst = normalizing_transform(dst);

    // Pad to at least 9 rows so the full right singular basis is available.
    let rows = (2 * n).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for i in 0..n {
        let s = transform(&t_src, &src[i]);
        let d = transform(&t_dst, &dst[i]);
        let r0 = 2 * i;
        let r1 = r0 + 1;
        a[(r0, 3)] = -s.x;
        a[(r0, 4)] = -s.y;
        a[(r0, 5)] = -1.0;
        a[(r0, 6)] = d.y * s.x;
        a[(r0, 7)] = d.y * s.y;
        a[(r0, 8)] = d.y;
        a[(r1, 0)] = s.x;
        a[(r1, 1)] = s.y;
        a[(r1, 2)] = 1.0;
        a[(r1, 6)] = -d.x * s.x;
        a[(r1, 7)] = -d.x * s.y;
        a[(r1, 8)] = -d.x;
    }

    let svd = a.svd(false, true);
    let v_t = svd.v_t.expect("requested V");
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[j].total_cmp(&sv[i]));
    let largest = sv[order[0]];
    let second_smallest = sv[order[order.len() - 2]];
    if !(second_smallest > 1e-12 * largest) {
        return Err(GeometryError::DegenerateConfiguration(
            "DLT system is rank deficient (collinear or repeated points)".into(),
        ));
    }
    let h = v_t.row(order[order.len() - 1]);
    let h_norm = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);

    let t_dst_inv = t_dst
        .try_inverse()
        .ok_or_else(|| GeometryError::DegenerateConfiguration("destination points coincide".into()))?;
    let homography = Homography::new(t_dst_inv * h_norm * t_src)?;
    let inverse = homography.inverse()?;

    let mut sum = 0.0;
    let mut max: f64 = 0.0;
    for (s, d) in src.iter().zip(dst) {
        let fwd = homography.apply(s).map_or(f64::INFINITY, |p| (p - d).norm());
        let bwd = inverse.apply(d).map_or(f64::INFINITY, |p| (p - s).norm());
        let e = fwd + bwd;
        sum += e;
        max = max.max(e);
    }

    Ok(HomographyFit {
        homography,
        mean_transfer_error: sum / n as f64,
        max_transfer_error: max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid() -> Vec<Vector2<f64>> {
        (0..3)
            .flat_map(|r| (0..4).map(move |c| Vector2::new(100.0 + 37.0 * c as f64, 80.0 + 41.0 * r as f64)))
            .collect()
    }

    #[test]
    fn identity_mapping() {
        let pts = grid();
        let fit = fit_homography(&pts, &pts).unwrap();
        assert!((fit.homography.matrix() - Matrix3::identity()).amax() < 1e-9);
        assert!(fit.max_transfer_error < 1e-9);

        let quad = vec![
            Vector2::new(0.0, 0.0),
            Vector2::new(1.0, 0.0),
            Vector2::new(1.0, 1.0),
            Vector2::new(0.0, 1.0),
        ];
        let fit = fit_homography(&quad, &quad).unwrap();
        assert!(fit.max_transfer_error < 1e-9);
    }

    #[test]
    fn pure_scaling() {
        let src = grid();
        let dst: Vec<_> = src.iter().map(|p| p * 2.0).collect();
        let fit = fit_homography(&src, &dst).unwrap();
        let expected = Matrix3::from_diagonal(&Vector3::new(2.0, 2.0, 1.0));
        assert!((fit.homography.matrix() - expected).amax() < 1e-9);
        assert!(fit.max_transfer_error < 1e-9);
    }

    #[test]
    fn projective_warp_recovered() {
        let warp = Homography::new(Matrix3::new(
            1.3, 0.21, 15.0, //
            -0.12, 0.87, 40.0, //
            4e-4, -7e-4, 1.0,
        ))
        .unwrap();
        let src = grid();
        let dst: Vec<_> = src.iter().map(|p| warp.apply(p).unwrap()).collect();
        let fit = fit_homography(&src, &dst).unwrap();
        assert!(fit.max_transfer_error < 1e-6, "{}", fit.max_transfer_error);
        assert!((fit.homography.matrix() - warp.matrix()).amax() < 1e-8);
    }

    #[test]
    fn too_few_and_degenerate() {
        let pts = grid();
        assert!(matches!(
            fit_homography(&pts[..3], &pts[..3]),
            Err(GeometryError::InsufficientData { needed: 4, got: 3 })
        ));
        let line: Vec<_> = (0..6).map(|i| Vector2::new(i as f64, 2.0 * i as f64)).collect();
        assert!(matches!(
            fit_homography(&line, &line),
            Err(GeometryError::DegenerateConfiguration(_))
        ));
        let three_collinear = vec![
            Vector2::new(0.0, 0.0),
            Vector2::new(1.0, 0.0),
            Vector2::new(2.0, 0.0),
            Vector2::new(0.0, 1.0),
        ];
        assert!(fit_homography(&three_collinear, &three_collinear).is_err());
    }

    proptest! {
        #[test]
        fn invariant_under_similarity(
            angle in -3.1f64..3.1,
            scale in 0.2f64..5.0,
            tx in -500.0f64..500.0,
            ty in -500.0f64..500.0,
        ) {
            let warp = Homography::new(Matrix3::new(
                0.9, 0.1, 5.0, -0.05, 1.1, -3.0, 2e-4, 1e-4, 1.0,
            )).unwrap();
            let (s, c) = angle.sin_cos();
            let sim = |p: &Vector2<f64>| Vector2::new(
                scale * (c * p.x - s * p.y) + tx,
                scale * (s * p.x + c * p.y) + ty,
            );
            let src: Vec<_> = grid().iter().map(sim).collect();
            let dst: Vec<_> = grid().iter().map(|p| sim(&warp.apply(p).unwrap())).collect();
            let fit = fit_homography(&src, &dst).unwrap();
            prop_assert!(fit.max_transfer_error < 1e-9, "{}", fit.max_transfer_error);
        }
    }
}
