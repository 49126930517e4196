use crate::{load_dataset, parse_ablation, write_file, CliError, GridArgs, PipelineArgs, MESH_DB_ENV};
use clap::Args;
use portion3d::dataset::{parse_corners, write_debug_images, SceneEntry};
use portion3d::estimate::{run_pipeline, EnergyDensityTable, PipelineContext, SceneInput};
use portion3d::geometry::{BoardLayout, CalibratedCamera};
use portion3d::{AblationFlags, MeshDb, Silhouette};
use nalgebra::Vector2;
use std::collections::HashMap;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Args)]
pub struct EstimateArgs {
    /// Take the scene from this manifest (with --scene) instead of
    /// individual files.
    #[arg(long, value_name = "PATH", requires = "scene")]
    pub manifest: Option<PathBuf>,
    /// Scene id within --manifest.
    #[arg(long, value_name = "ID", requires = "manifest")]
    pub scene: Option<String>,
    /// Scene photograph; only used for debug overlays.
    #[arg(long, value_name = "PATH")]
    pub image: Option<PathBuf>,
    /// Binary object mask (PNG).
    #[arg(long, value_name = "PATH", required_unless_present = "manifest")]
    pub mask: Option<PathBuf>,
    /// JSON list of board corner pixels in row-major grid order.
    #[arg(long, value_name = "PATH", required_unless_present = "manifest")]
    pub corners: Option<PathBuf>,
    /// Camera intrinsics JSON.
    #[arg(long, value_name = "PATH", required_unless_present = "manifest")]
    pub intrinsics: Option<PathBuf>,
    /// Directory of `<label>.obj` reference meshes [default: the manifest's
    /// `mesh_db`, then $PORTION_MESH_DB].
    #[arg(long, value_name = "DIR")]
    pub mesh_db: Option<PathBuf>,
    /// Energy density CSV (`label,kcal_per_ml,source`).
    #[arg(long, value_name = "PATH", required_unless_present = "manifest")]
    pub density: Option<PathBuf>,
    /// Food label; taken from the manifest entry when omitted.
    #[arg(long)]
    pub label: Option<String>,
    /// Comma-separated pose components to zero: zero_tx, zero_ty, zero_theta.
    #[arg(long, value_name = "LIST", value_parser = parse_ablation)]
    pub ablate: Option<AblationFlags>,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

struct Loaded {
    camera: CalibratedCamera,
    board: BoardLayout,
    meshes: MeshDb,
    densities: EnergyDensityTable,
    input: SceneInput,
    image: Option<PathBuf>,
}

fn from_manifest(a: &EstimateArgs, manifest: &Path, id: &str) -> Result<Loaded, CliError> {
    let ds = load_dataset(manifest, a.mesh_db.as_deref())?;
    let entry: &SceneEntry = ds
        .entries
        .iter()
        .find(|e| e.id == id)
        .ok_or_else(|| CliError::Input(format!("{}: no scene `{id}`", manifest.display())))?;
    let mut input = entry.to_input().map_err(|e| CliError::Input(format!("scene `{id}`: {e}")))?;
    if let Some(label) = &a.label {
        input.label.clone_from(label);
    }
    let image = a.image.clone().or_else(|| entry.image.clone());
    Ok(Loaded {
        camera: ds.camera,
        board: ds.board,
        meshes: ds.meshes,
        densities: ds.densities,
        input,
        image,
    })
}

fn from_files(a: &EstimateArgs) -> Result<Loaded, CliError> {
    // clap guarantees these without --manifest.
    let (mask, corners, intrinsics, density) = (
        a.mask.as_deref().unwrap(),
        a.corners.as_deref().unwrap(),
        a.intrinsics.as_deref().unwrap(),
        a.density.as_deref().unwrap(),
    );
    let label = a
        .label
        .clone()
        .ok_or_else(|| CliError::Input("--label is required without --manifest".into()))?;
    let mesh_db = a
        .mesh_db
        .clone()
        .or_else(|| std::env::var_os(MESH_DB_ENV).map(PathBuf::from))
        .ok_or_else(|| CliError::Input(format!("no mesh database: pass --mesh-db or set {MESH_DB_ENV}")))?;

    let camera = CalibratedCamera::load(intrinsics).map_err(CliError::input)?;
    let meshes = MeshDb::load_dir(&mesh_db, &HashMap::new()).map_err(CliError::input)?;
    let densities = EnergyDensityTable::load(density).map_err(CliError::input)?;
    let text = std::fs::read_to_string(corners).map_err(|e| CliError::Input(format!("{}: {e}", corners.display())))?;
    let corners = parse_corners(&text).map_err(|e| CliError::Input(format!("{}: {e}", corners.display())))?;
    let mask = Silhouette::load_png(mask).map_err(CliError::input)?;
    Ok(Loaded {
        camera,
        board: a.grid.layout(),
        meshes,
        densities,
        input: SceneInput {
            id: mask_stem(a.mask.as_deref().unwrap()),
            label,
            mask,
            corners: corners.iter().map(|c| Vector2::new(c[0], c[1])).collect(),
        },
        image: a.image.clone(),
    })
}

fn mask_stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "scene".into())
}

pub fn run(a: &EstimateArgs) -> Result<(), CliError> {
    let config = a.pipeline.resolve(a.ablate)?;
    let loaded = match (&a.manifest, &a.scene) {
        (Some(m), Some(id)) => from_manifest(a, m, id)?,
        _ => from_files(a)?,
    };
    let ctx = PipelineContext {
        camera: &loaded.camera,
        board: &loaded.board,
        meshes: &loaded.meshes,
        densities: &loaded.densities,
    };
    let out = run_pipeline(&loaded.input, &ctx, &config)?;
    let json = serde_json::to_string_pretty(&out.record).expect("record serializes");
    if let Some(dir) = &config.output_dir {
        write_file(&dir.join(format!("{}.json", loaded.input.id)), &json)?;
        if config.debug_render {
            write_debug_images(&dir.join("debug"), &loaded.input.id, &out, loaded.image.as_deref())
                .map_err(CliError::input)?;
        }
    }
    println!("{json}");
    Ok(())
}
