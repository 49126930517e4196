//! Object pose `[tx, ty, θz]` from the segmentation mask and the board.
//!
//! Orientation is the principal axis of the foreground pixel cloud; the
//! planar position is the mask centroid mapped onto the board plane through
//! the image→board rectifier. Rotations about X and Y and the vertical
//! offset are fixed at zero: the object rests on the board plane.

use crate::geometry::Homography;
use crate::mask::Silhouette;
use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};
use thiserror::Error;

/// Relative eigenvalue gap below which a mask counts as isotropic.
pub const ISOTROPY_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PoseError {
    #[error("mask has no foreground pixels")]
    EmptyMask,
    #[error("mask foreground is a single point; orientation undefined")]
    DegenerateMask,
    #[error("mask centroid maps to the line at infinity of the board plane")]
    RectificationFailure,
}

/// Planar translation (cm) and rotation about world `+Z` (radians, in
/// `[−π/2, π/2)`).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ObjectPose {
    pub tx: f64,
    pub ty: f64,
    pub theta_z: f64,
}

/// Components of the object pose forced to zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AblationFlags {
    #[serde(default)]
    pub zero_tx: bool,
    #[serde(default)]
    pub zero_ty: bool,
    #[serde(default, alias = "zero_theta")]
    pub zero_theta_z: bool,
}

impl AblationFlags {
    pub const NONE: AblationFlags = AblationFlags {
        zero_tx: false,
        zero_ty: false,
        zero_theta_z: false,
    };
    pub const ALL: AblationFlags = AblationFlags {
        zero_tx: true,
        zero_ty: true,
        zero_theta_z: true,
    };

    /// The five object-pose ablation rows: `tx` off, `ty` off, both
    /// translations off, rotation off, nothing off.
    pub fn table_rows() -> [AblationFlags; 5] {
        [
            AblationFlags { zero_tx: true, ..Self::NONE },
            AblationFlags { zero_ty: true, ..Self::NONE },
            AblationFlags { zero_tx: true, zero_ty: true, ..Self::NONE },
            AblationFlags { zero_theta_z: true, ..Self::NONE },
            Self::NONE,
        ]
    }

    pub fn apply(&self, pose: ObjectPose) -> ObjectPose {
        ObjectPose {
            tx: if self.zero_tx { 0.0 } else { pose.tx },
            ty: if self.zero_ty { 0.0 } else { pose.ty },
            theta_z: if self.zero_theta_z { 0.0 } else { pose.theta_z },
        }
    }

    /// Parses a comma-separated list such as `zero_tx,zero_theta`; `none`
    /// or an empty string means no ablation.
    pub fn parse_list(s: &str) -> Result<Self, String> {
        let mut flags = Self::NONE;
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "none" => {}
                "zero_tx" | "tx" => flags.zero_tx = true,
                "zero_ty" | "ty" => flags.zero_ty = true,
                "zero_theta" | "zero_theta_z" | "theta" | "theta_z" => flags.zero_theta_z = true,
                "all" => flags = Self::ALL,
                other => return Err(format!("unknown ablation flag `{other}`")),
            }
        }
        Ok(flags)
    }

    /// Short stable name, e.g. `zero_tx+zero_ty` or `none`.
    pub fn name(&self) -> String {
        let mut parts = Vec::new();
        if self.zero_tx {
            parts.push("zero_tx");
        }
        if self.zero_ty {
            parts.push("zero_ty");
        }
        if self.zero_theta_z {
            parts.push("zero_theta_z");
        }
        if parts.is_empty() {
            "none".into()
        } else {
            parts.join("+")
        }
    }
}

/// Wraps an undirected axis angle into `[−π/2, π/2)`.
pub fn wrap_axis_angle(a: f64) -> f64 {
    let mut w = (a + FRAC_PI_2).rem_euclid(PI) - FRAC_PI_2;
    if w >= FRAC_PI_2 {
        w -= PI;
    }
    w
}

/// Angle between the image `u` axis and the major principal axis of the
/// foreground pixel centres, in `[−π/2, π/2)`. Angles are measured in pixel
/// coordinates (`v` down). Isotropic masks return 0.
pub fn principal_axis_angle(mask: &Silhouette) -> Result<f64, PoseError> {
    let m = mask.moments().ok_or(PoseError::EmptyMask)?;
    let [a, b, c] = m.covariance;
    let trace = a + c;
    if m.count < 2 || trace <= 0.0 {
        return Err(PoseError::DegenerateMask);
    }
    let gap = ((a - c) * (a - c) + 4.0 * b * b).sqrt();
    if gap < ISOTROPY_TOLERANCE * trace {
        return Ok(0.0);
    }
    Ok(wrap_axis_angle(0.5 * (2.0 * b).atan2(a - c)))
}

/// Maps an image point to board-plane coordinates through `rectifier`.
pub fn rectify_point(rectifier: &Homography, pixel: &Vector2<f64>) -> Result<Vector2<f64>, PoseError> {
    let h = rectifier.apply_homogeneous(pixel);
    if h.z.abs() < 1e-12 || !h.iter().all(|x| x.is_finite()) {
        return Err(PoseError::RectificationFailure);
    }
    Ok(Vector2::new(h.x / h.z, h.y / h.z))
}

/// Offset (cm) of the rectified mask centroid from `reference_corner`.
pub fn planar_translation(
    mask: &Silhouette,
    rectifier: &Homography,
    reference_corner: &Vector2<f64>,
) -> Result<Vector2<f64>, PoseError> {
    let m = mask.moments().ok_or(PoseError::EmptyMask)?;
    Ok(rectify_point(rectifier, &m.centroid)? - reference_corner)
}

/// Combines orientation and planar translation into `[tx, ty, θz]`, then
/// zeroes the components selected by `ablation`.
///
/// The image `v` axis points down, so an image-plane angle `α` corresponds
/// to a rotation of `−α` about world `+Z`.
pub fn estimate_object_pose(
    mask: &Silhouette,
    rectifier: &Homography,
    reference_corner: &Vector2<f64>,
    ablation: AblationFlags,
) -> Result<ObjectPose, PoseError> {
    let t = planar_translation(mask, rectifier, reference_corner)?;
    let angle = principal_axis_angle(mask)?;
    let pose = ObjectPose {
        tx: t.x,
        ty: t.y,
        theta_z: wrap_axis_angle(-angle),
    };
    Ok(ablation.apply(pose))
}
