//! Dataset manifests, ground truth, splits, metrics and evaluation reports.
//!
//! A manifest is one JSON document. Paths inside it are resolved against
//! the manifest's directory unless absolute:
//!
//! ```json
//! {
//!   "name": "simplefood45",
//!   "intrinsics": "intrinsics.json",
//!   "mesh_db": "meshes",
//!   "density": "density.csv",
//!   "grid": {"cols": 4, "rows": 3, "spacing_cm": 1.2},
//!   "mesh_units": {"apple": 0.1},
//!   "scenes": [
//!     {"id": "apple_001", "image": "img/apple_001.jpg", "mask": "mask/apple_001.png",
//!      "label": "apple", "corners": [[812.5, 301.0], ...],
//!      "volume_ml": 180.0, "weight_g": 165.0, "energy_kcal": 94.0, "split": "test"}
//!   ]
//! }
//! ```

mod evaluate;
mod metrics;
mod split;

pub use evaluate::{
    evaluate, render_text_report, rows_to_csv, write_debug_images, Evaluation, FailureSummary, MetricsReport, SceneRow,
};
pub use metrics::{baseline_predictor, compute_metrics, ErrorMetrics, Field, GroupMetrics};
pub use split::{split_dataset, SplitTag};

use crate::estimate::{EnergyDensityTable, EstimateError, SceneInput};
use crate::geometry::{BoardLayout, CalibratedCamera};
use crate::io::{resolve, write_atomic};
use crate::mask::Silhouette;
use crate::mesh::{write_obj, MeshDb};
use crate::synth::{Fixture, SynthScene};
use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}: invalid manifest: {message}")]
    Manifest { path: String, message: String },
    #[error("scene `{id}`: {message}")]
    Entry { id: String, message: String },
    #[error("mesh database {path}: {message}")]
    MeshDb { path: String, message: String },
    #[error(transparent)]
    Density(#[from] EstimateError),
    #[error("no mesh database given (manifest `mesh_db` field or an explicit path)")]
    NoMeshDb,
    #[error("{0}")]
    Split(String),
    #[error("metrics: {0}")]
    Metrics(String),
    #[error("all {0} scenes failed")]
    AllScenesFailed(usize),
    #[error("nothing to evaluate")]
    Empty,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> DatasetError {
    DatasetError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneEntry {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<PathBuf>,
    pub mask: PathBuf,
    pub label: String,
    /// Board corners in row-major grid order, `[u, v]` pixels.
    pub corners: Vec<[f64; 2]>,
    pub volume_ml: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_g: Option<f64>,
    pub energy_kcal: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitTag>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestFile {
    #[serde(default)]
    pub name: String,
    pub intrinsics: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh_db: Option<PathBuf>,
    pub density: PathBuf,
    #[serde(default)]
    pub grid: BoardLayout,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub mesh_units: BTreeMap<String, f64>,
    pub scenes: Vec<SceneEntry>,
}

/// A validated manifest with its camera, meshes and densities loaded.
/// Scene paths in `entries` are already resolved.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub root: PathBuf,
    pub camera: CalibratedCamera,
    pub board: BoardLayout,
    pub meshes: MeshDb,
    pub densities: EnergyDensityTable,
    pub entries: Vec<SceneEntry>,
}

/// Loads and validates a manifest. `mesh_db` overrides the manifest's own
/// `mesh_db` field.
pub fn load_manifest(path: &Path, mesh_db: Option<&Path>) -> Result<Dataset, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let file: ManifestFile = serde_json::from_str(&text).map_err(|e| DatasetError::Manifest {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();

    let intrinsics_path = resolve(&root, &file.intrinsics);
    let camera = CalibratedCamera::load(&intrinsics_path).map_err(|e| io_err(&intrinsics_path, e))?;

    let mesh_dir = match (mesh_db, &file.mesh_db) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(p)) => resolve(&root, p),
        (None, None) => return Err(DatasetError::NoMeshDb),
    };
    let units: HashMap<String, f64> = file.mesh_units.iter().map(|(k, v)| (k.clone(), *v)).collect();
    let meshes = MeshDb::load_dir(&mesh_dir, &units).map_err(|e| DatasetError::MeshDb {
        path: mesh_dir.display().to_string(),
        message: e.to_string(),
    })?;

    let density_path = resolve(&root, &file.density);
    let densities = EnergyDensityTable::load(&density_path)?;
    densities.check_covers(&meshes)?;

    if file.scenes.is_empty() {
        log::warn!("{}: manifest lists no scenes", path.display());
    }
    let mut seen = HashSet::new();
    let mut entries = Vec::with_capacity(file.scenes.len());
    for mut e in file.scenes {
        validate_entry(&e, &file.grid, &meshes)?;
        if !seen.insert(e.id.clone()) {
            return Err(entry_err(&e.id, "duplicate scene id"));
        }
        e.mask = resolve(&root, &e.mask);
        if !e.mask.is_file() {
            return Err(entry_err(&e.id, format!("mask file {} not found", e.mask.display())));
        }
        if let Some(img) = &e.image {
            let img = resolve(&root, img);
            if !img.is_file() {
                log::warn!("scene {}: image {} not found; overlays will use the mask", e.id, img.display());
            }
            e.image = Some(img);
        }
        entries.push(e);
    }

    Ok(Dataset {
        name: file.name,
        root,
        camera,
        board: file.grid,
        meshes,
        densities,
        entries,
    })
}

fn entry_err(id: &str, message: impl Into<String>) -> DatasetError {
    DatasetError::Entry {
        id: id.to_string(),
        message: message.into(),
    }
}

fn validate_entry(e: &SceneEntry, board: &BoardLayout, meshes: &MeshDb) -> Result<(), DatasetError> {
    if e.corners.len() != board.corner_count() {
        return Err(entry_err(
            &e.id,
            format!("expected {} corners, got {}", board.corner_count(), e.corners.len()),
        ));
    }
    if e.corners.iter().flatten().any(|c| !c.is_finite()) {
        return Err(entry_err(&e.id, "non-finite corner coordinate"));
    }
    for (name, value) in [("volume_ml", Some(e.volume_ml)), ("energy_kcal", Some(e.energy_kcal)), ("weight_g", e.weight_g)] {
        if let Some(v) = value {
            if !(v > 0.0) || !v.is_finite() {
                return Err(entry_err(&e.id, format!("{name} must be positive, got {v}")));
            }
        }
    }
    if !meshes.contains(&e.label) {
        return Err(entry_err(&e.id, format!("no reference mesh for label `{}`", e.label)));
    }
    Ok(())
}

impl SceneEntry {
    pub fn corner_points(&self) -> Vec<Vector2<f64>> {
        self.corners.iter().map(|c| Vector2::new(c[0], c[1])).collect()
    }

    /// Reads the mask and packages the entry for the pipeline.
    pub fn to_input(&self) -> Result<SceneInput, String> {
        let mask = Silhouette::load_png(&self.mask).map_err(|e| e.to_string())?;
        Ok(SceneInput {
            id: self.id.clone(),
            label: self.label.clone(),
            mask,
            corners: self.corner_points(),
        })
    }
}

/// Parses a corners document: either a bare array of `[u, v]` pairs or an
/// object with a `corners` array.
pub fn parse_corners(text: &str) -> Result<Vec<[f64; 2]>, String> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Doc {
        Bare(Vec<[f64; 2]>),
        Wrapped { corners: Vec<[f64; 2]> },
    }
    match serde_json::from_str::<Doc>(text).map_err(|e| e.to_string())? {
        Doc::Bare(c) | Doc::Wrapped { corners: c } => Ok(c),
    }
}

/// Writes a self-contained dataset directory for synthetic scenes:
/// `manifest.json`, `intrinsics.json`, `density.csv`, `meshes/<label>.obj`,
/// `masks/<id>.png` and `corners/<id>.json`. Ground-truth energy is the
/// fixture's density times the true volume.
pub fn write_synthetic_dataset(
    dir: &Path,
    name: &str,
    scenes: &[SynthScene],
    fixtures: &[Fixture],
    camera: &CalibratedCamera,
    board: &BoardLayout,
) -> Result<PathBuf, DatasetError> {
    let mut densities = EnergyDensityTable::new();
    for f in fixtures {
        densities.insert(f.label(), f.kcal_per_ml, "synthetic fixture")?;
        let p = dir.join("meshes").join(format!("{}.obj", f.label()));
        write_atomic(&p, write_obj(&f.mesh).as_bytes()).map_err(|e| io_err(&p, e))?;
    }
    let write = |rel: &str, bytes: &[u8]| -> Result<(), DatasetError> {
        let p = dir.join(rel);
        write_atomic(&p, bytes).map_err(|e| io_err(&p, e))
    };
    write("density.csv", densities.to_csv().as_bytes())?;
    write("intrinsics.json", camera.to_json_string().as_bytes())?;

    let mut entries = Vec::with_capacity(scenes.len());
    for s in scenes {
        let rho = densities.get(&s.label)?;
        let mask_rel = format!("masks/{}.png", s.id);
        let p = dir.join(&mask_rel);
        s.mask.save_png(&p).map_err(|e| io_err(&p, e))?;
        let corners: Vec<[f64; 2]> = s.corners.iter().map(|c| [c.x, c.y]).collect();
        let corners_json = serde_json::to_string_pretty(&serde_json::json!({ "corners": corners }))
            .expect("corners serialize");
        write(&format!("corners/{}.json", s.id), corners_json.as_bytes())?;
        entries.push(SceneEntry {
            id: s.id.clone(),
            image: None,
            mask: PathBuf::from(mask_rel),
            label: s.label.clone(),
            corners,
            volume_ml: s.volume_ml,
            weight_g: None,
            energy_kcal: rho * s.volume_ml,
            split: None,
        });
    }
    let manifest = ManifestFile {
        name: name.to_string(),
        intrinsics: PathBuf::from("intrinsics.json"),
        mesh_db: Some(PathBuf::from("meshes")),
        density: PathBuf::from("density.csv"),
        grid: *board,
        mesh_units: BTreeMap::new(),
        scenes: entries,
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serialize");
    write_atomic(&path, text.as_bytes()).map_err(|e| io_err(&path, e))?;
    Ok(path)
}
