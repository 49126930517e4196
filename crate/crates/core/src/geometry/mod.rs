//! Pinhole camera model, rigid transforms and the checkerboard reference frame.
//!
//! World frame conventions used throughout the crate:
//!
//! - the checkerboard lies on the `Z = 0` plane, `Z` points up;
//! - the origin is the top-right inner corner of the board as seen in the
//!   image, `X` grows leftward along a corner row and `Y` grows toward the
//!   rows nearest the camera;
//! - all lengths are centimetres.
//!
//! Pixel coordinates `(u, v)` are measured at pixel centres with `u` to the
//! right and `v` down; the top-left pixel centre is `(0, 0)`.

mod homography;
mod pnp;

pub use homography::{fit_homography, Homography, HomographyFit};
pub use pnp::{solve_pnp, solve_pnp_with, PnpOptions, PnpSolution};

use nalgebra::{Matrix3, Rotation3, Unit, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

/// Tolerance on `RᵀR = I` and `det R = 1`.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("insufficient data: need at least {needed} points, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("point is behind the camera (depth {depth})")]
    BehindCamera { depth: f64 },
    #[error(
        "pose refinement did not converge (best mean reprojection error {:.4} px)",
        best.mean_reprojection_error
    )]
    NoConvergence { best: Box<PnpSolution> },
    #[error("rigid transform invariant violated: {0}")]
    InvariantViolation(String),
    #[error("intrinsics file {path}: {message}")]
    IntrinsicsFile { path: String, message: String },
}

/// Pinhole intrinsics forming the upper-triangular camera matrix `K`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    #[serde(default)]
    pub skew: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self, GeometryError> {
        Self::with_skew(fx, fy, cx, cy, 0.0)
    }

    pub fn with_skew(fx: f64, fy: f64, cx: f64, cy: f64, skew: f64) -> Result<Self, GeometryError> {
        let k = Self { fx, fy, cx, cy, skew };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.fx > 0.0 && self.fy > 0.0) || !self.fx.is_finite() || !self.fy.is_finite() {
            return Err(GeometryError::InvalidArgument(format!(
                "focal lengths must be positive and finite (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if !self.cx.is_finite() || !self.cy.is_finite() || !self.skew.is_finite() {
            return Err(GeometryError::InvalidArgument(
                "principal point and skew must be finite".into(),
            ));
        }
        Ok(())
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.fx, self.skew, self.cx, //
            0.0, self.fy, self.cy, //
            0.0, 0.0, 1.0,
        )
    }

    /// Maps a camera-frame point with positive depth to pixels.
    pub fn project_camera_point(&self, p: &Vector3<f64>) -> Vector2<f64> {
        let x = p.x / p.z;
        let y = p.y / p.z;
        Vector2::new(self.fx * x + self.skew * y + self.cx, self.fy * y + self.cy)
    }

    /// Pixel to normalized image coordinates (`K⁻¹ · [u v 1]ᵀ`).
    pub fn normalize_pixel(&self, uv: &Vector2<f64>) -> Vector2<f64> {
        let y = (uv.y - self.cy) / self.fy;
        let x = (uv.x - self.cx - self.skew * y) / self.fx;
        Vector2::new(x, y)
    }
}

/// Contents of an intrinsics JSON file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibratedCamera {
    #[serde(flatten)]
    pub intrinsics: CameraIntrinsics,
    pub image_width: u32,
    pub image_height: u32,
}

#[derive(Deserialize)]
struct IntrinsicsFileRepr {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    #[serde(default)]
    skew: f64,
    image_width: u32,
    image_height: u32,
    #[serde(default)]
    distortion: Vec<f64>,
    #[serde(default)]
    k1: f64,
    #[serde(default)]
    k2: f64,
    #[serde(default)]
    k3: f64,
    #[serde(default)]
    p1: f64,
    #[serde(default)]
    p2: f64,
}

impl CalibratedCamera {
    /// Parses an intrinsics document. Distortion coefficients may be present
    /// but must all be zero; the pipeline has no distortion model.
    pub fn from_json_str(text: &str) -> Result<Self, String> {
        let repr: IntrinsicsFileRepr = serde_json::from_str(text).map_err(|e| e.to_string())?;
        let named = [repr.k1, repr.k2, repr.k3, repr.p1, repr.p2];
        if repr.distortion.iter().chain(named.iter()).any(|c| *c != 0.0) {
            return Err("nonzero lens distortion coefficients are not supported; \
                        undistort the image and annotations first"
                .into());
        }
        if repr.image_width == 0 || repr.image_height == 0 {
            return Err("image_width and image_height must be positive".into());
        }
        let intrinsics = CameraIntrinsics::with_skew(repr.fx, repr.fy, repr.cx, repr.cy, repr.skew)
            .map_err(|e| e.to_string())?;
        Ok(Self {
            intrinsics,
            image_width: repr.image_width,
            image_height: repr.image_height,
        })
    }

    pub fn load(path: &Path) -> Result<Self, GeometryError> {
        let err = |message: String| GeometryError::IntrinsicsFile {
            path: path.display().to_string(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        Self::from_json_str(&text).map_err(err)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("intrinsics serialize")
    }
}

/// Rotation plus translation. Used both for world→camera extrinsics and for
/// the camera pose expressed in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a transform after checking the rotation invariants.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        let t = Self { rotation, translation };
        t.check_invariants()?;
        Ok(t)
    }

    pub fn from_axis_angle(axis_angle: Vector3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation: Rotation3::new(axis_angle).into_inner(),
            translation,
        }
    }

    /// World→camera extrinsics for a camera at `eye` looking at `target`.
    ///
    /// Camera axes are `x` right, `y` down, `z` forward; `up` fixes the roll.
    pub fn look_at(
        eye: Vector3<f64>,
        target: Vector3<f64>,
        up: Vector3<f64>,
    ) -> Result<Self, GeometryError> {
        let forward = target - eye;
        if forward.norm() < 1e-12 {
            return Err(GeometryError::InvalidArgument("eye and target coincide".into()));
        }
        let forward = forward.normalize();
        let right = forward.cross(&up);
        if right.norm() < 1e-9 {
            return Err(GeometryError::InvalidArgument(
                "up vector is parallel to the viewing direction".into(),
            ));
        }
        let right = right.normalize();
        let down = forward.cross(&right);
        let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        Ok(Self {
            rotation,
            translation: -(rotation * eye),
        })
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn check_invariants(&self) -> Result<(), GeometryError> {
        let r = &self.rotation;
        let ortho = (r.transpose() * r - Matrix3::identity()).amax();
        if !(ortho < ROTATION_TOLERANCE) {
            return Err(GeometryError::InvariantViolation(format!(
                "|RᵀR − I|∞ = {ortho:e}"
            )));
        }
        let det = r.determinant();
        if !((det - 1.0).abs() < ROTATION_TOLERANCE) {
            return Err(GeometryError::InvariantViolation(format!("det R = {det}")));
        }
        if !self.translation.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::InvariantViolation("non-finite translation".into()));
        }
        Ok(())
    }

    /// Angle of the relative rotation between `self` and `other`, radians.
    pub fn rotation_angle_to(&self, other: &RigidTransform) -> f64 {
        let rel = self.rotation.transpose() * other.rotation;
        let c = ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        c.acos()
    }
}

/// Inverts world→camera extrinsics into the camera pose in world
/// coordinates: `R = Rcᵀ`, `t = −Rcᵀ·tc`. The returned translation is the
/// camera centre.
pub fn invert_extrinsics(extrinsics: &RigidTransform) -> Result<RigidTransform, GeometryError> {
    extrinsics.check_invariants()?;
    let rt = extrinsics.rotation.transpose();
    Ok(RigidTransform {
        rotation: rt,
        translation: -(rt * extrinsics.translation),
    })
}

/// Pixel/world pair used by the pose solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub pixel: Vector2<f64>,
    pub world: Vector3<f64>,
}

impl Correspondence {
    pub fn new(pixel: [f64; 2], world: [f64; 3]) -> Self {
        Self {
            pixel: Vector2::new(pixel[0], pixel[1]),
            world: Vector3::new(world[0], world[1], world[2]),
        }
    }
}

/// Inner-corner layout of a checkerboard.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoardLayout {
    pub cols: usize,
    pub rows: usize,
    pub spacing_cm: f64,
}

impl Default for BoardLayout {
    /// 5×4-square board: 4×3 inner corners, 1.2 cm apart.
    fn default() -> Self {
        Self {
            cols: 4,
            rows: 3,
            spacing_cm: 1.2,
        }
    }
}

impl BoardLayout {
    pub fn corner_count(&self) -> usize {
        self.cols * self.rows
    }

    pub fn world_points(&self) -> Result<Vec<Vector3<f64>>, GeometryError> {
        checkerboard_world_grid(self.cols, self.rows, self.spacing_cm)
    }
}

/// World positions of the inner checkerboard corners, row-major from the
/// top-right corner: point `r * cols + c` sits at `(c·spacing, r·spacing, 0)`.
pub fn checkerboard_world_grid(
    cols: usize,
    rows: usize,
    spacing: f64,
) -> Result<Vec<Vector3<f64>>, GeometryError> {
    if cols < 2 || rows < 2 {
        return Err(GeometryError::InvalidArgument(format!(
            "grid needs at least 2×2 corners, got {cols}×{rows}"
        )));
    }
    if !(spacing > 0.0) || !spacing.is_finite() {
        return Err(GeometryError::InvalidArgument(format!(
            "grid spacing must be positive, got {spacing}"
        )));
    }
    Ok((0..rows)
        .flat_map(|r| (0..cols).map(move |c| Vector3::new(c as f64 * spacing, r as f64 * spacing, 0.0)))
        .collect())
}

/// Projects a world point through `K·[R|t]`.
/// Points closer to the camera plane than this are treated as behind it.
pub const MIN_DEPTH: f64 = 1e-9;

pub fn project_point(
    k: &CameraIntrinsics,
    extrinsics: &RigidTransform,
    world_point: &Vector3<f64>,
) -> Result<Vector2<f64>, GeometryError> {
    let pc = extrinsics.apply(world_point);
    if !(pc.z > MIN_DEPTH) {
        return Err(GeometryError::BehindCamera { depth: pc.z });
    }
    Ok(k.project_camera_point(&pc))
}

/// Rotation by `angle` radians about the world `+Z` axis.
pub fn rotation_about_z(angle: f64) -> Matrix3<f64> {
    Rotation3::from_axis_angle(&Unit::new_unchecked(Vector3::z()), angle).into_inner()
}

/// Nearest rotation (Frobenius norm) to an arbitrary 3×3 matrix.
pub(crate) fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let mut d = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    u * d * v_t
}
