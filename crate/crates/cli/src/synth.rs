use crate::{write_file, CliError, GridArgs};
use clap::Args;
use portion3d::dataset::write_synthetic_dataset;
use portion3d::geometry::CalibratedCamera;
use portion3d::synth::{
    camera_centre, default_camera, fixture, fixture_set, generate_scene, random_scene, scene_seed, Fixture, SceneParams,
    SynthScene,
};
use serde_json::json;
use std::path::PathBuf;

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, value_name = "DIR")]
    pub output_dir: PathBuf,
    /// Dataset name recorded in the manifest.
    #[arg(long, default_value = "synthetic")]
    pub name: String,
    /// Fixture meshes to place: cube, icosphere, torus.
    #[arg(long, value_delimiter = ',', default_values_t = ["cube".to_string(), "icosphere".into(), "torus".into()])]
    pub fixtures: Vec<String>,
    /// Linear mesh scales `k`; the true volume is `k³` times the fixture's.
    #[arg(long, value_delimiter = ',', default_values_t = [1.0])]
    pub scales: Vec<f64>,
    /// Draw camera and object placement from --seed instead of the
    /// canonical view.
    #[arg(long)]
    pub random: bool,
    #[arg(long, default_value_t = 0, requires = "random")]
    pub seed: u64,
    /// Scenes per fixture and scale with --random.
    #[arg(long, default_value_t = 1, requires = "random")]
    pub count: usize,
    /// Camera distance from the look-at point (cm).
    #[arg(long, conflicts_with = "random")]
    pub distance: Option<f64>,
    /// Camera elevation above the board plane (degrees).
    #[arg(long, conflicts_with = "random", allow_hyphen_values = true)]
    pub elevation: Option<f64>,
    #[arg(long, conflicts_with = "random", allow_hyphen_values = true)]
    pub azimuth: Option<f64>,
    #[arg(long, conflicts_with = "random", allow_hyphen_values = true)]
    pub roll: Option<f64>,
    /// Object offset from the first board corner along X (cm).
    #[arg(long, conflicts_with = "random", allow_hyphen_values = true)]
    pub tx: Option<f64>,
    #[arg(long, conflicts_with = "random", allow_hyphen_values = true)]
    pub ty: Option<f64>,
    /// Object rotation about Z (radians).
    #[arg(long, conflicts_with = "random", allow_hyphen_values = true)]
    pub theta_z: Option<f64>,
    /// Camera intrinsics JSON; defaults to a 1280×720 camera with f = 1000 px.
    #[arg(long, value_name = "PATH")]
    pub intrinsics: Option<PathBuf>,
    #[command(flatten)]
    pub grid: GridArgs,
}

impl SynthArgs {
    fn canonical_params(&self, scale: f64) -> SceneParams {
        let mut p = SceneParams::canonical(scale);
        let v = &mut p.view;
        v.distance_cm = self.distance.unwrap_or(v.distance_cm);
        v.elevation_deg = self.elevation.unwrap_or(v.elevation_deg);
        v.azimuth_deg = self.azimuth.unwrap_or(v.azimuth_deg);
        v.roll_deg = self.roll.unwrap_or(v.roll_deg);
        p.pose.tx = self.tx.unwrap_or(p.pose.tx);
        p.pose.ty = self.ty.unwrap_or(p.pose.ty);
        p.pose.theta_z = self.theta_z.unwrap_or(p.pose.theta_z);
        p
    }
}

fn scale_tag(k: f64) -> String {
    format!("k{k}").replace('.', "p")
}

pub fn run(a: &SynthArgs) -> Result<(), CliError> {
    let camera = match &a.intrinsics {
        Some(p) => CalibratedCamera::load(p).map_err(CliError::input)?,
        None => default_camera(),
    };
    let board = a.grid.layout();
    let fixtures: Vec<Fixture> = a
        .fixtures
        .iter()
        .map(|name| {
            fixture(name).ok_or_else(|| {
                let known: Vec<String> = fixture_set().iter().map(|f| f.label().to_string()).collect();
                CliError::Input(format!("unknown fixture `{name}` (known: {})", known.join(", ")))
            })
        })
        .collect::<Result<_, _>>()?;
    if a.scales.is_empty() || a.scales.iter().any(|k| !(*k > 0.0)) {
        return Err(CliError::Input(format!("scales must be positive, got {:?}", a.scales)));
    }

    let mut scenes: Vec<SynthScene> = Vec::new();
    for f in &fixtures {
        for &k in &a.scales {
            if a.random {
                for i in 0..a.count {
                    let id = format!("{}_{}_{i:03}", f.label(), scale_tag(k));
                    let seed = scene_seed(a.seed, scenes.len() as u64);
                    scenes.push(random_scene(id, &f.mesh, f.volume_ml, k, seed, &camera, &board)?);
                }
            } else {
                let id = format!("{}_{}", f.label(), scale_tag(k));
                scenes.push(generate_scene(id, &f.mesh, f.volume_ml, &a.canonical_params(k), &camera, &board)?);
            }
        }
    }

    let manifest = write_synthetic_dataset(&a.output_dir, &a.name, &scenes, &fixtures, &camera, &board)?;
    let truth: Vec<_> = scenes
        .iter()
        .map(|s| {
            let c = camera_centre(&s.extrinsics);
            json!({
                "id": s.id,
                "label": s.label,
                "params": s.params,
                "camera_position_cm": [c.x, c.y, c.z],
                "volume_ml": s.volume_ml,
            })
        })
        .collect();
    let text = serde_json::to_string_pretty(&truth).expect("truth serializes");
    write_file(&a.output_dir.join("truth.json"), &text)?;
    println!("{}", manifest.display());
    Ok(())
}
