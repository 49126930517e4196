//! Synthetic scenes with known answers: a reference mesh scaled by `k` and
//! placed on the board plane, photographed by a pinhole camera. The scene's
//! mask is the rendered silhouette and its corners are the exact
//! projections of the board grid, so the true volume is `k³·V`.

use crate::geometry::{project_point, BoardLayout, CalibratedCamera, CameraIntrinsics, GeometryError, RigidTransform};
use crate::mask::Silhouette;
use crate::mesh::{apply_object_pose, canonicalize, fixtures, mesh_volume, MeshError, TriangleMesh};
use crate::objectpose::ObjectPose;
use crate::render::{projection_matrix, render_silhouette, RenderError};
use nalgebra::{Vector2, Vector3};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Minimum distance (px) kept between the image border and any corner or
/// object pixel.
pub const MARGIN_PX: f64 = 8.0;
const MAX_ATTEMPTS: usize = 500;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("camera faces away from the board")]
    FacingAway,
    #[error("board corner {index} projects outside the image")]
    CornerOutOfView { index: usize },
    #[error("object silhouette is empty or touches the image border")]
    ObjectOutOfView,
    #[error("invalid scene parameters: {0}")]
    InvalidArgument(String),
    #[error("no valid scene after {0} attempts")]
    Exhausted(usize),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// 1280×720 camera with a 1000 px focal length and centred principal point.
pub fn default_camera() -> CalibratedCamera {
    CalibratedCamera {
        intrinsics: CameraIntrinsics::new(1000.0, 1000.0, 639.5, 359.5).expect("valid intrinsics"),
        image_width: 1280,
        image_height: 720,
    }
}

/// Camera placement relative to the look-at target. Azimuth 0 puts the
/// camera on the `+Y` side of the board, looking toward `−Y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewParams {
    pub distance_cm: f64,
    pub elevation_deg: f64,
    pub azimuth_deg: f64,
    pub roll_deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneParams {
    pub view: ViewParams,
    pub pose: ObjectPose,
    /// Linear scale `k` applied to the reference mesh.
    pub scale: f64,
}

impl SceneParams {
    /// Camera 50 cm above the board at 45° pitch, object centred on the
    /// board's column span a few centimetres in front of it.
    pub fn canonical(scale: f64) -> Self {
        Self {
            view: ViewParams {
                distance_cm: 50.0 * std::f64::consts::SQRT_2,
                elevation_deg: 45.0,
                azimuth_deg: 0.0,
                roll_deg: 0.0,
            },
            pose: ObjectPose {
                tx: 1.8,
                ty: 8.0,
                theta_z: 0.0,
            },
            scale,
        }
    }

    /// Off-centre object, camera 35–60 cm away at 35°–75° elevation.
    pub fn random(rng: &mut impl Rng, scale: f64) -> Self {
        Self {
            view: ViewParams {
                distance_cm: rng.random_range(35.0..60.0),
                elevation_deg: rng.random_range(35.0..75.0),
                azimuth_deg: rng.random_range(-25.0..25.0),
                roll_deg: rng.random_range(-5.0..5.0),
            },
            pose: ObjectPose {
                tx: rng.random_range(-6.0..10.0),
                ty: rng.random_range(5.0..12.0),
                theta_z: 0.0,
            },
            scale,
        }
    }
}

/// Looks at the midpoint between the board centre and the object.
pub fn camera_extrinsics(params: &SceneParams, board: &BoardLayout) -> Result<RigidTransform, SynthError> {
    let v = &params.view;
    if !(v.distance_cm > 0.0) {
        return Err(SynthError::InvalidArgument(format!("distance must be positive, got {}", v.distance_cm)));
    }
    let board_centre = Vector3::new(
        (board.cols - 1) as f64 * board.spacing_cm / 2.0,
        (board.rows - 1) as f64 * board.spacing_cm / 2.0,
        0.0,
    );
    let target = (board_centre + Vector3::new(params.pose.tx, params.pose.ty, 0.0)) / 2.0;
    let (e, a) = (v.elevation_deg.to_radians(), v.azimuth_deg.to_radians());
    let eye = target + v.distance_cm * Vector3::new(e.cos() * a.sin(), e.cos() * a.cos(), e.sin());
    let base = RigidTransform::look_at(eye, target, Vector3::z())?;
    let roll = crate::geometry::rotation_about_z(v.roll_deg.to_radians());
    Ok(RigidTransform {
        rotation: roll * base.rotation,
        translation: roll * base.translation,
    })
}

#[derive(Debug, Clone)]
pub struct SynthScene {
    pub id: String,
    pub label: String,
    pub params: SceneParams,
    pub extrinsics: RigidTransform,
    pub mask: Silhouette,
    pub corners: Vec<Vector2<f64>>,
    /// `k³` times the reference volume.
    pub volume_ml: f64,
}

/// Renders `mesh` (already canonical) under `params`.
pub fn generate_scene(
    id: impl Into<String>,
    mesh: &TriangleMesh,
    model_volume_ml: f64,
    params: &SceneParams,
    camera: &CalibratedCamera,
    board: &BoardLayout,
) -> Result<SynthScene, SynthError> {
    let extrinsics = camera_extrinsics(params, board)?;
    generate_scene_from(id, mesh, model_volume_ml, params, extrinsics, camera, board)
}

/// As [`generate_scene`], with the camera given directly; `params.view` is
/// recorded but not used.
pub fn generate_scene_from(
    id: impl Into<String>,
    mesh: &TriangleMesh,
    model_volume_ml: f64,
    params: &SceneParams,
    extrinsics: RigidTransform,
    camera: &CalibratedCamera,
    board: &BoardLayout,
) -> Result<SynthScene, SynthError> {
    if !(params.scale > 0.0) {
        return Err(SynthError::InvalidArgument(format!("scale must be positive, got {}", params.scale)));
    }
    if camera_centre(&extrinsics).z <= 0.0 {
        return Err(SynthError::FacingAway);
    }
    let (w, h) = (camera.image_width as f64, camera.image_height as f64);

    let world = board.world_points()?;
    let mut corners = Vec::with_capacity(world.len());
    for (index, p) in world.iter().enumerate() {
        let uv = match project_point(&camera.intrinsics, &extrinsics, p) {
            Ok(uv) => uv,
            Err(GeometryError::BehindCamera { .. }) => return Err(SynthError::FacingAway),
            Err(e) => return Err(e.into()),
        };
        let inside = uv.x >= MARGIN_PX && uv.y >= MARGIN_PX && uv.x <= w - 1.0 - MARGIN_PX && uv.y <= h - 1.0 - MARGIN_PX;
        if !inside {
            return Err(SynthError::CornerOutOfView { index });
        }
        corners.push(uv);
    }

    let posed = apply_object_pose(mesh, &params.pose, params.scale)?;
    let p = projection_matrix(&camera.intrinsics, &extrinsics);
    let out = render_silhouette(&posed, &p, camera.image_width as usize, camera.image_height as usize)?;
    if out.discarded > 0 || out.silhouette.is_empty() || touches_border(&out.silhouette, MARGIN_PX as usize) {
        return Err(SynthError::ObjectOutOfView);
    }

    let k = params.scale;
    Ok(SynthScene {
        id: id.into(),
        label: mesh.label().to_string(),
        params: *params,
        extrinsics,
        mask: out.silhouette,
        corners,
        volume_ml: k * k * k * model_volume_ml,
    })
}

fn touches_border(mask: &Silhouette, margin: usize) -> bool {
    let (w, h) = (mask.width(), mask.height());
    mask.foreground()
        .any(|(u, v)| u < margin || v < margin || u + margin >= w || v + margin >= h)
}

/// Draws random parameters from `seed` until the scene fits in the image.
/// The same seed always yields the same scene.
pub fn random_scene(
    id: impl Into<String>,
    mesh: &TriangleMesh,
    model_volume_ml: f64,
    scale: f64,
    seed: u64,
    camera: &CalibratedCamera,
    board: &BoardLayout,
) -> Result<SynthScene, SynthError> {
    let id = id.into();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_ATTEMPTS {
        let params = SceneParams::random(&mut rng, scale);
        match generate_scene(id.clone(), mesh, model_volume_ml, &params, camera, board) {
            Ok(s) => return Ok(s),
            Err(SynthError::CornerOutOfView { .. } | SynthError::ObjectOutOfView | SynthError::FacingAway) => {}
            Err(e) => return Err(e),
        }
    }
    Err(SynthError::Exhausted(MAX_ATTEMPTS))
}

/// Seed for the `index`-th scene of a batch drawn from `base`.
pub fn scene_seed(base: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(index);
    rng.next_u64()
}

/// A reference shape with its label, canonical mesh, volume and a nominal
/// energy density.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub mesh: TriangleMesh,
    pub volume_ml: f64,
    pub kcal_per_ml: f64,
}

impl Fixture {
    fn new(mesh: TriangleMesh, kcal_per_ml: f64) -> Self {
        let volume_ml = mesh_volume(&mesh).expect("closed fixture");
        Self {
            mesh: canonicalize(&mesh),
            volume_ml,
            kcal_per_ml,
        }
    }

    pub fn label(&self) -> &str {
        self.mesh.label()
    }
}

/// 4 cm cube, 2.5 cm icosphere (1280 faces), torus with 3 cm and 1.2 cm
/// radii.
pub fn fixture_set() -> Vec<Fixture> {
    vec![
        Fixture::new(fixtures::cube(4.0), 0.9),
        Fixture::new(fixtures::icosphere(2.5, 3), 0.6),
        Fixture::new(fixtures::torus(3.0, 1.2, 48, 24), 1.3),
    ]
}

pub fn fixture(label: &str) -> Option<Fixture> {
    fixture_set().into_iter().find(|f| f.label() == label)
}

/// Ground-plane footprint (cm) of the camera centre, for diagnostics.
pub fn camera_centre(extrinsics: &RigidTransform) -> Vector3<f64> {
    -(extrinsics.rotation.transpose() * extrinsics.translation)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_scene_is_valid() {
        let f = fixture("cube").unwrap();
        let s = generate_scene("c", &f.mesh, f.volume_ml, &SceneParams::canonical(1.0), &default_camera(), &BoardLayout::default())
            .unwrap();
        assert_eq!(s.corners.len(), 12);
        assert!((s.volume_ml - 64.0).abs() < 1e-9);
        assert!(s.mask.count() > 1000);
        assert!((camera_centre(&s.extrinsics).z - 50.0).abs() < 1e-9);
        assert!(s.extrinsics.check_invariants().is_ok());
    }

    #[test]
    fn corner_zero_is_top_right_in_image() {
        let f = fixture("cube").unwrap();
        let s = generate_scene("c", &f.mesh, f.volume_ml, &SceneParams::canonical(1.0), &default_camera(), &BoardLayout::default())
            .unwrap();
        // +X runs leftward and +Y toward the camera (down in the image).
        assert!(s.corners[1].x < s.corners[0].x);
        assert!(s.corners[4].y > s.corners[0].y);
    }

    #[test]
    fn facing_away_is_rejected() {
        let f = fixture("cube").unwrap();
        let (camera, board) = (default_camera(), BoardLayout::default());
        let p = SceneParams::canonical(1.0);
        let up = RigidTransform::look_at(Vector3::new(0.0, 0.0, 50.0), Vector3::new(0.0, 1.0, 100.0), Vector3::y()).unwrap();
        let err = generate_scene_from("c", &f.mesh, f.volume_ml, &p, up, &camera, &board);
        assert!(matches!(err, Err(SynthError::FacingAway)));
        let below = SceneParams {
            view: ViewParams { elevation_deg: -45.0, ..p.view },
            ..p
        };
        let err = generate_scene("c", &f.mesh, f.volume_ml, &below, &camera, &board);
        assert!(matches!(err, Err(SynthError::FacingAway)));
        let err = generate_scene("c", &f.mesh, f.volume_ml, &SceneParams { scale: -1.0, ..p }, &camera, &board);
        assert!(matches!(err, Err(SynthError::InvalidArgument(_))));
    }

    #[test]
    fn random_scenes_are_deterministic() {
        let f = fixture("torus").unwrap();
        let (camera, board) = (default_camera(), BoardLayout::default());
        let a = random_scene("t", &f.mesh, f.volume_ml, 1.25, 7, &camera, &board).unwrap();
        let b = random_scene("t", &f.mesh, f.volume_ml, 1.25, 7, &camera, &board).unwrap();
        assert_eq!(a.mask, b.mask);
        assert_eq!(a.corners, b.corners);
        assert_eq!(a.params, b.params);
        let c = random_scene("t", &f.mesh, f.volume_ml, 1.25, 8, &camera, &board).unwrap();
        assert_ne!(a.params, c.params);
    }

    #[test]
    fn scene_seeds_differ_per_index() {
        assert_eq!(scene_seed(7, 3), scene_seed(7, 3));
        let seeds: std::collections::HashSet<_> = (0..100).map(|i| scene_seed(7, i)).collect();
        assert_eq!(seeds.len(), 100);
        assert_ne!(scene_seed(7, 0), scene_seed(8, 0));
    }
}
