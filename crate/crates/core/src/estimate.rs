//! Per-scene estimation: board pose, object pose, silhouette render, area
//! ratio, volume and energy.
//!
//! The pose and scale come out of a single pass when
//! `refine.max_iterations` is zero. Otherwise the render is iterated: each
//! round shifts the model so the rendered silhouette's centroid lands on the
//! observed one (on the board plane), and rescales it by the remaining
//! area ratio. This removes the bias from rendering at unit scale and from
//! the object's height lifting the mask centroid off its footprint. Unless
//! the orientation is ablated, the rotation about `+Z` is then re-chosen to
//! maximize overlap with the observed mask and the loop runs again.

use crate::geometry::{
    fit_homography, invert_extrinsics, solve_pnp_with, BoardLayout, CalibratedCamera, Correspondence,
    GeometryError, Homography, PnpOptions,
};
use crate::mask::{PixelRect, Silhouette};
use crate::mesh::{apply_object_pose, MeshDb, MeshError, TriangleMesh};
use crate::objectpose::{
    estimate_object_pose, rectify_point, wrap_axis_angle, AblationFlags, ObjectPose, PoseError,
};
use crate::render::{projection_matrix, render_silhouette, RenderError, RenderOutput};
use nalgebra::{Matrix3x4, Vector2};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimateError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("input mask is empty")]
    EmptyMask,
    #[error("rendered silhouette is empty")]
    EmptyRender,
    #[error("no energy density for label `{0}`")]
    MissingDensity(String),
    #[error("no reference mesh for label `{0}`")]
    MissingMesh(String),
    #[error("density table: {0}")]
    DensityTable(String),
    #[error("run config: {0}")]
    Config(String),
}

/// Pixel count of the foreground.
pub fn mask_area(mask: &Silhouette) -> usize {
    mask.count()
}

/// Linear scale `√(A / A′)` relating the observed and rendered footprints.
pub fn scale_factor(area_input: f64, area_rendered: f64) -> Result<f64, EstimateError> {
    if !(area_input > 0.0) {
        return Err(EstimateError::EmptyMask);
    }
    if !(area_rendered > 0.0) {
        return Err(EstimateError::EmptyRender);
    }
    Ok((area_input / area_rendered).sqrt())
}

/// Volume of the reference model after uniform scaling by `s`.
pub fn estimate_volume(s: f64, model_volume_ml: f64) -> Result<f64, EstimateError> {
    if !(s > 0.0) || !(model_volume_ml > 0.0) || !s.is_finite() || !model_volume_ml.is_finite() {
        return Err(EstimateError::InvalidArgument(format!(
            "scale and model volume must be positive, got s = {s}, V = {model_volume_ml}"
        )));
    }
    Ok(s * s * s * model_volume_ml)
}

pub fn estimate_energy(rho_kcal_per_ml: f64, volume_ml: f64) -> Result<f64, EstimateError> {
    if !(rho_kcal_per_ml > 0.0) || !(volume_ml >= 0.0) || !rho_kcal_per_ml.is_finite() || !volume_ml.is_finite() {
        return Err(EstimateError::InvalidArgument(format!(
            "density must be positive and volume non-negative, got ρ = {rho_kcal_per_ml}, v = {volume_ml}"
        )));
    }
    Ok(rho_kcal_per_ml * volume_ml)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityEntry {
    pub label: String,
    pub kcal_per_ml: f64,
    #[serde(default)]
    pub source: String,
}

/// Energy density per food label, read from a `label,kcal_per_ml,source`
/// CSV.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EnergyDensityTable {
    entries: BTreeMap<String, DensityEntry>,
}

impl EnergyDensityTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, label: impl Into<String>, kcal_per_ml: f64, source: impl Into<String>) -> Result<(), EstimateError> {
        let label = label.into();
        if !(kcal_per_ml > 0.0) || !kcal_per_ml.is_finite() {
            return Err(EstimateError::DensityTable(format!(
                "density for `{label}` must be positive, got {kcal_per_ml}"
            )));
        }
        if self.entries.contains_key(&label) {
            return Err(EstimateError::DensityTable(format!("duplicate label `{label}`")));
        }
        let entry = DensityEntry {
            label: label.clone(),
            kcal_per_ml,
            source: source.into(),
        };
        self.entries.insert(label, entry);
        Ok(())
    }

    pub fn from_csv_reader<R: std::io::Read>(reader: R) -> Result<Self, EstimateError> {
        let mut table = Self::new();
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        for row in rdr.deserialize::<DensityEntry>() {
            let row = row.map_err(|e| EstimateError::DensityTable(e.to_string()))?;
            table.insert(row.label, row.kcal_per_ml, row.source)?;
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self, EstimateError> {
        let file = std::fs::File::open(path)
            .map_err(|e| EstimateError::DensityTable(format!("{}: {e}", path.display())))?;
        Self::from_csv_reader(file)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for e in self.entries.values() {
            w.serialize(e).expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
    }

    pub fn get(&self, label: &str) -> Result<f64, EstimateError> {
        self.entries
            .get(label)
            .map(|e| e.kcal_per_ml)
            .ok_or_else(|| EstimateError::MissingDensity(label.to_string()))
    }

    /// Fails if any mesh label lacks a density.
    pub fn check_covers(&self, meshes: &MeshDb) -> Result<(), EstimateError> {
        match meshes.labels().find(|l| !self.entries.contains_key(*l)) {
            Some(l) => Err(EstimateError::MissingDensity(l.to_string())),
            None => Ok(()),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Silhouette alignment loop. `max_iterations = 0` gives the single-pass
/// estimate: pose from the mask, one render at unit scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineConfig {
    pub max_iterations: usize,
    /// Relative scale change below which the loop stops.
    pub scale_tolerance: f64,
    /// Translation change (cm) below which the loop stops.
    pub translation_tolerance_cm: f64,
    /// Replace the principal-axis orientation with the one whose render
    /// best overlaps the observed mask.
    pub orientation_search: bool,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            max_iterations: 10,
            scale_tolerance: 1e-5,
            translation_tolerance_cm: 1e-4,
            orientation_search: true,
        }
    }
}

impl RefineConfig {
    pub const SINGLE_PASS: RefineConfig = RefineConfig {
        max_iterations: 0,
        scale_tolerance: 1e-5,
        translation_tolerance_cm: 1e-4,
        orientation_search: false,
    };
}

/// Run configuration, read from TOML or JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub ablation: AblationFlags,
    pub refine: RefineConfig,
    pub debug_render: bool,
    pub output_dir: Option<PathBuf>,
}

impl PipelineConfig {
    /// `.toml` files are parsed as TOML, everything else as JSON.
    pub fn load(path: &Path) -> Result<Self, EstimateError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| EstimateError::Config(format!("{}: {e}", path.display())))?;
        let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
        let parsed = if is_toml {
            toml::from_str(&text).map_err(|e| e.to_string())
        } else {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        };
        parsed.map_err(|e| EstimateError::Config(format!("{}: {e}", path.display())))
    }
}

/// Shared read-only inputs for every scene of a dataset.
#[derive(Debug, Clone, Copy)]
pub struct PipelineContext<'a> {
    pub camera: &'a CalibratedCamera,
    pub board: &'a BoardLayout,
    pub meshes: &'a MeshDb,
    pub densities: &'a EnergyDensityTable,
}

#[derive(Debug, Clone)]
pub struct SceneInput {
    pub id: String,
    pub label: String,
    pub mask: Silhouette,
    /// Board corners in row-major grid order.
    pub corners: Vec<Vector2<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Input,
    Pnp,
    Rectifier,
    ObjectPose,
    Mesh,
    Render,
    Scale,
    Energy,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Input => "input",
            Stage::Pnp => "pnp",
            Stage::Rectifier => "rectifier",
            Stage::ObjectPose => "object_pose",
            Stage::Mesh => "mesh",
            Stage::Render => "render",
            Stage::Scale => "scale",
            Stage::Energy => "energy",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StageError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Pose(#[from] PoseError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error("{0}")]
    Mesh(String),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
}

impl From<MeshError> for StageError {
    fn from(e: MeshError) -> Self {
        StageError::Mesh(e.to_string())
    }
}

/// Whatever was computed before a stage failed.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    pub pnp_residual_px: Option<f64>,
    pub camera_position_cm: Option<[f64; 3]>,
    pub rectifier_transfer_error_px: Option<f64>,
    pub mask_components: Vec<usize>,
    pub pose: Option<ObjectPose>,
    pub area_input: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("scene `{scene}` failed at stage {stage}: {error}")]
pub struct PipelineFailure {
    pub scene: String,
    pub stage: Stage,
    pub error: StageError,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateRecord {
    pub scene_id: String,
    pub label: String,
    /// Observed foreground pixels `A`.
    pub area_input: usize,
    /// Rendered area at unit model scale `A′`, so that `s = √(A/A′)`.
    pub area_rendered: f64,
    /// Pixels in the final render and the model scale it was drawn at.
    pub rendered_pixels: usize,
    pub render_scale: f64,
    pub scale: f64,
    pub model_volume_ml: f64,
    pub volume_ml: f64,
    pub density_kcal_per_ml: f64,
    pub energy_kcal: f64,
    pub pnp_residual_px: f64,
    pub rectifier_transfer_error_px: f64,
    pub camera_position_cm: [f64; 3],
    pub pose: ObjectPose,
    pub ablation: AblationFlags,
    pub refine_iterations: usize,
    pub discarded_triangles: usize,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub record: EstimateRecord,
    /// Largest connected component of the input mask.
    pub observed: Silhouette,
    pub rendered: Silhouette,
}

pub fn run_pipeline(
    scene: &SceneInput,
    ctx: &PipelineContext<'_>,
    config: &PipelineConfig,
) -> Result<PipelineOutput, PipelineFailure> {
    let mut diag = Diagnostics::default();
    macro_rules! fail {
        ($stage:expr, $err:expr) => {
            return Err(PipelineFailure {
                scene: scene.id.clone(),
                stage: $stage,
                error: StageError::from($err),
                diagnostics: diag,
            })
        };
    }
    macro_rules! attempt {
        ($stage:expr, $e:expr) => {
            match $e {
                Ok(v) => v,
                Err(err) => fail!($stage, err),
            }
        };
    }

    let camera = ctx.camera;
    let (width, height) = (camera.image_width as usize, camera.image_height as usize);
    if scene.mask.width() != width || scene.mask.height() != height {
        fail!(
            Stage::Input,
            EstimateError::InvalidArgument(format!(
                "mask is {}×{} but the intrinsics describe a {width}×{height} image",
                scene.mask.width(),
                scene.mask.height()
            ))
        );
    }
    let world = attempt!(Stage::Input, ctx.board.world_points());
    if scene.corners.len() != world.len() {
        fail!(
            Stage::Input,
            EstimateError::InvalidArgument(format!(
                "expected {} board corners, got {}",
                world.len(),
                scene.corners.len()
            ))
        );
    }
    let (model, model_volume) = match ctx.meshes.get(&scene.label) {
        Some(m) => m,
        None => fail!(Stage::Input, EstimateError::MissingMesh(scene.label.clone())),
    };
    let rho = attempt!(Stage::Input, ctx.densities.get(&scene.label));

    let (observed, sizes) = scene.mask.largest_component();
    if sizes.len() > 1 {
        log::warn!(
            "scene {}: mask has {} components, keeping the largest ({} of {} px)",
            scene.id,
            sizes.len(),
            sizes[0],
            sizes.iter().sum::<usize>()
        );
    }
    diag.mask_components = sizes;
    let area_input = mask_area(&observed);
    diag.area_input = Some(area_input);
    if area_input == 0 {
        fail!(Stage::Input, EstimateError::EmptyMask);
    }

    let correspondences: Vec<Correspondence> = scene
        .corners
        .iter()
        .zip(&world)
        .map(|(p, w)| Correspondence { pixel: *p, world: *w })
        .collect();
    let pnp = attempt!(Stage::Pnp, solve_pnp_with(&correspondences, &camera.intrinsics, &PnpOptions::default()));
    diag.pnp_residual_px = Some(pnp.mean_reprojection_error);
    let camera_pose = attempt!(Stage::Pnp, invert_extrinsics(&pnp.extrinsics));
    let c = camera_pose.translation;
    diag.camera_position_cm = Some([c.x, c.y, c.z]);

    let board_xy: Vec<Vector2<f64>> = world.iter().map(|w| w.xy()).collect();
    let rectifier = attempt!(Stage::Rectifier, fit_homography(&scene.corners, &board_xy));
    diag.rectifier_transfer_error_px = Some(rectifier.mean_transfer_error);
    let rectifier = rectifier.homography;

    let origin = board_xy[0];
    let mut pose = attempt!(
        Stage::ObjectPose,
        estimate_object_pose(&observed, &rectifier, &origin, config.ablation)
    );
    diag.pose = Some(pose);
    let observed_centroid = match observed.moments() {
        Some(m) => attempt!(Stage::ObjectPose, rectify_point(&rectifier, &m.centroid)),
        None => fail!(Stage::ObjectPose, PoseError::EmptyMask),
    };

    let aligner = Aligner {
        model,
        p: projection_matrix(&camera.intrinsics, &pnp.extrinsics),
        width,
        height,
        rectifier: &rectifier,
        observed: &observed,
        observed_rect: observed.bounding_rect().unwrap_or(observed.full_rect()),
        area_input,
        observed_centroid,
        ablation: config.ablation,
        refine: config.refine,
    };
    let mut render_scale = 1.0;
    let mut out = attempt!(Stage::Render, aligner.render(&pose, render_scale));
    let mut iterations = 0;
    if config.refine.max_iterations > 0 {
        (pose, render_scale, out) = attempt!(Stage::Render, aligner.align(pose, render_scale, out, &mut iterations));
        if config.refine.orientation_search && !config.ablation.zero_theta_z {
            // A coarse scan first, then a local pass once the scale has
            // been corrected for the new orientation.
            for coarse in [true, false] {
                let rotated = attempt!(Stage::Render, aligner.search_orientation(pose, render_scale, &out, coarse));
                if rotated != pose {
                    let out_rotated = attempt!(Stage::Render, aligner.render(&rotated, render_scale));
                    (pose, render_scale, out) =
                        attempt!(Stage::Render, aligner.align(rotated, render_scale, out_rotated, &mut iterations));
                }
            }
        }
        diag.pose = Some(pose);
    }

    let rendered_pixels = mask_area(&out.silhouette);
    let area_rendered = rendered_pixels as f64 / (render_scale * render_scale);
    let s = attempt!(Stage::Scale, scale_factor(area_input as f64, area_rendered));
    let volume = attempt!(Stage::Scale, estimate_volume(s, model_volume));
    let energy = attempt!(Stage::Energy, estimate_energy(rho, volume));

    let record = EstimateRecord {
        scene_id: scene.id.clone(),
        label: scene.label.clone(),
        area_input,
        area_rendered,
        rendered_pixels,
        render_scale,
        scale: s,
        model_volume_ml: model_volume,
        volume_ml: volume,
        density_kcal_per_ml: rho,
        energy_kcal: energy,
        pnp_residual_px: pnp.mean_reprojection_error,
        rectifier_transfer_error_px: diag.rectifier_transfer_error_px.unwrap_or(f64::NAN),
        camera_position_cm: [c.x, c.y, c.z],
        pose,
        ablation: config.ablation,
        refine_iterations: iterations,
        discarded_triangles: out.discarded,
    };
    Ok(PipelineOutput {
        record,
        observed,
        rendered: out.silhouette,
    })
}

struct Aligner<'a> {
    model: &'a TriangleMesh,
    p: Matrix3x4<f64>,
    width: usize,
    height: usize,
    rectifier: &'a Homography,
    observed: &'a Silhouette,
    observed_rect: PixelRect,
    area_input: usize,
    /// Observed mask centroid on the board plane.
    observed_centroid: Vector2<f64>,
    ablation: AblationFlags,
    refine: RefineConfig,
}

impl Aligner<'_> {
    fn render(&self, pose: &ObjectPose, scale: f64) -> Result<RenderOutput, StageError> {
        let posed = apply_object_pose(self.model, pose, scale)?;
        let out = render_silhouette(&posed, &self.p, self.width, self.height)?;
        if out.bounds.is_none() || out.silhouette.centroid_in(&out.bounds.unwrap()).0 == 0 {
            return Err(EstimateError::EmptyRender.into());
        }
        Ok(out)
    }

    /// Alternates a planar shift that puts the rendered centroid onto the
    /// observed one with a rescale by the remaining area ratio.
    fn align(
        &self,
        mut pose: ObjectPose,
        mut scale: f64,
        mut out: RenderOutput,
        iterations: &mut usize,
    ) -> Result<(ObjectPose, f64, RenderOutput), StageError> {
        for _ in 0..self.refine.max_iterations {
            *iterations += 1;
            let (n, centroid) = out.silhouette.centroid_in(&out.bounds.expect("nonempty render"));
            let centroid = centroid.expect("nonempty render");
            let next_scale = scale * (self.area_input as f64 / n as f64).sqrt();
            let shift = self.observed_centroid - rectify_point(self.rectifier, &centroid)?;
            let mut next = pose;
            if !self.ablation.zero_tx {
                next.tx += shift.x;
            }
            if !self.ablation.zero_ty {
                next.ty += shift.y;
            }
            let moved = (next.tx - pose.tx).hypot(next.ty - pose.ty);
            let rescaled = (next_scale / scale - 1.0).abs();
            pose = next;
            scale = next_scale;
            out = self.render(&pose, scale)?;
            if rescaled < self.refine.scale_tolerance && moved < self.refine.translation_tolerance_cm {
                break;
            }
        }
        Ok((pose, scale, out))
    }

    fn iou(&self, out: &RenderOutput) -> f64 {
        let rect = out.bounds.map_or(self.observed_rect, |b| b.union(&self.observed_rect));
        let (inter, union) = out.silhouette.overlap_in(self.observed, &rect);
        inter as f64 / union.max(1) as f64
    }

    /// Rotation about `+Z` maximizing silhouette overlap with the observed
    /// mask: optionally a coarse scan over half a turn, then golden-section
    /// search around the best sample. Returns `pose` unchanged unless the
    /// overlap strictly improves.
    fn search_orientation(
        &self,
        pose: ObjectPose,
        scale: f64,
        current: &RenderOutput,
        coarse: bool,
    ) -> Result<ObjectPose, StageError> {
        const STEPS: usize = 30;
        let step = std::f64::consts::PI / STEPS as f64;
        let steps = if coarse { STEPS } else { 1 };
        let score = |theta: f64| -> Result<f64, StageError> {
            let candidate = ObjectPose { theta_z: theta, ..pose };
            Ok(self.iou(&self.render(&candidate, scale)?))
        };
        let start = self.iou(current);
        let (mut best_theta, mut best) = (pose.theta_z, start);
        for i in 1..steps {
            let theta = pose.theta_z + i as f64 * step;
            let v = score(theta)?;
            if v > best {
                (best_theta, best) = (theta, v);
            }
        }

        let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
        let half_width = if coarse { step } else { step / 4.0 };
        let (mut lo, mut hi) = (best_theta - half_width, best_theta + half_width);
        let mut x1 = hi - inv_phi * (hi - lo);
        let mut x2 = lo + inv_phi * (hi - lo);
        let (mut f1, mut f2) = (score(x1)?, score(x2)?);
        for _ in 0..GOLDEN_ITERATIONS {
            if f1 >= f2 {
                hi = x2;
                (x2, f2) = (x1, f1);
                x1 = hi - inv_phi * (hi - lo);
                f1 = score(x1)?;
            } else {
                lo = x1;
                (x1, f1) = (x2, f2);
                x2 = lo + inv_phi * (hi - lo);
                f2 = score(x2)?;
            }
        }
        for (theta, v) in [(x1, f1), (x2, f2)] {
            if v > best {
                (best_theta, best) = (theta, v);
            }
        }

        if best > start {
            Ok(ObjectPose {
                theta_z: wrap_axis_angle(best_theta),
                ..pose
            })
        } else {
            Ok(pose)
        }
    }
}

const GOLDEN_ITERATIONS: usize = 12;
