use crate::{CliError, GridArgs};
use clap::Args;
use nalgebra::Vector2;
use portion3d::dataset::parse_corners;
use portion3d::geometry::{solve_pnp, CalibratedCamera, Correspondence};
use portion3d::mesh::apply_object_pose;
use portion3d::render::{projection_matrix, render_silhouette};
use portion3d::synth::fixture;
use portion3d::{MeshDb, ObjectPose, TriangleMesh};
use serde_json::json;
use std::collections::HashMap;
use std::path::PathBuf;

#[derive(Debug, Clone, Args)]
pub struct RenderArgs {
    #[arg(long, value_name = "PATH")]
    pub intrinsics: PathBuf,
    /// Board corner pixels; the camera pose is solved from them.
    #[arg(long, value_name = "PATH")]
    pub corners: PathBuf,
    /// Mesh database holding --label.
    #[arg(long, value_name = "DIR", requires = "label", conflicts_with = "fixture")]
    pub mesh_db: Option<PathBuf>,
    #[arg(long)]
    pub label: Option<String>,
    /// Built-in mesh instead of a database entry: cube, icosphere, torus.
    #[arg(long, required_unless_present = "mesh_db")]
    pub fixture: Option<String>,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub tx: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub ty: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub theta_z: f64,
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    /// Output PNG of the rendered silhouette.
    #[arg(long, value_name = "PATH")]
    pub output: PathBuf,
    #[command(flatten)]
    pub grid: GridArgs,
}

fn load_mesh(a: &RenderArgs) -> Result<TriangleMesh, CliError> {
    if let Some(name) = &a.fixture {
        return fixture(name)
            .map(|f| f.mesh)
            .ok_or_else(|| CliError::Input(format!("unknown fixture `{name}`")));
    }
    let (dir, label) = (a.mesh_db.as_deref().unwrap(), a.label.as_deref().unwrap());
    let db = MeshDb::load_dir(dir, &HashMap::new()).map_err(CliError::input)?;
    db.get(label)
        .map(|(m, _)| m.clone())
        .ok_or_else(|| CliError::Input(format!("{}: no mesh `{label}`", dir.display())))
}

pub fn run(a: &RenderArgs) -> Result<(), CliError> {
    let camera = CalibratedCamera::load(&a.intrinsics).map_err(CliError::input)?;
    let text = std::fs::read_to_string(&a.corners).map_err(|e| CliError::Input(format!("{}: {e}", a.corners.display())))?;
    let corners = parse_corners(&text).map_err(|e| CliError::Input(format!("{}: {e}", a.corners.display())))?;
    let world = a.grid.layout().world_points().map_err(CliError::input)?;
    if corners.len() != world.len() {
        return Err(CliError::Input(format!("expected {} corners, got {}", world.len(), corners.len())));
    }
    let correspondences: Vec<Correspondence> = corners
        .iter()
        .zip(&world)
        .map(|(c, w)| Correspondence {
            pixel: Vector2::new(c[0], c[1]),
            world: *w,
        })
        .collect();
    let pnp = solve_pnp(&correspondences, &camera.intrinsics).map_err(|e| CliError::Geometry(e.to_string()))?;

    let mesh = load_mesh(a)?;
    let pose = ObjectPose {
        tx: a.tx,
        ty: a.ty,
        theta_z: a.theta_z,
    };
    let posed = apply_object_pose(&mesh, &pose, a.scale).map_err(CliError::input)?;
    let p = projection_matrix(&camera.intrinsics, &pnp.extrinsics);
    let out = render_silhouette(&posed, &p, camera.image_width as usize, camera.image_height as usize)
        .map_err(|e| CliError::Render(e.to_string()))?;
    out.silhouette.save_png(&a.output).map_err(CliError::input)?;
    let summary = json!({
        "output": a.output,
        "pixels": out.silhouette.count(),
        "kept_triangles": out.kept,
        "discarded_triangles": out.discarded,
        "pnp_residual_px": pnp.mean_reprojection_error,
    });
    println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
    Ok(())
}
