//! Command-line front end: single-scene estimation, dataset evaluation and
//! ablation sweeps, synthetic scene generation and debug rendering.

mod error;
mod estimate;
mod evaluate;
mod render;
mod synth;

pub use error::CliError;

use clap::{Args, Parser, Subcommand};
use portion3d::dataset::{load_manifest, Dataset, DatasetError};
use portion3d::estimate::{PipelineConfig, RefineConfig};
use portion3d::geometry::BoardLayout;
use portion3d::AblationFlags;
use std::path::{Path, PathBuf};

/// Environment variable naming the default mesh database directory.
pub const MESH_DB_ENV: &str = "PORTION_MESH_DB";

#[derive(Debug, Parser)]
#[command(name = "portion3d", version, about = "Estimate food volume and energy from a single image")]
pub struct Cli {
    /// Worker threads; defaults to the number of available cores.
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate one scene and print its record as JSON.
    Estimate(estimate::EstimateArgs),
    /// Evaluate a manifest and write per-scene and aggregate reports.
    Evaluate(evaluate::EvaluateArgs),
    /// Generate synthetic scenes with known volume.
    Synth(synth::SynthArgs),
    /// Render a mesh silhouette under the camera recovered from a corner file.
    Render(render::RenderArgs),
}

/// Options shared by commands that run the pipeline.
#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    /// TOML or JSON run configuration; flags below override it.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Run the one-shot estimate without alignment refinement.
    #[arg(long)]
    pub single_pass: bool,
    /// Write observed, rendered and overlay PNGs under the output directory.
    #[arg(long)]
    pub debug_render: bool,
    #[arg(long, value_name = "DIR")]
    pub output_dir: Option<PathBuf>,
}

impl PipelineArgs {
    pub fn resolve(&self, ablation: Option<AblationFlags>) -> Result<PipelineConfig, CliError> {
        let mut config = match &self.config {
            Some(p) => PipelineConfig::load(p).map_err(CliError::input)?,
            None => PipelineConfig::default(),
        };
        if let Some(a) = ablation {
            config.ablation = a;
        }
        if self.single_pass {
            config.refine = RefineConfig::SINGLE_PASS;
        }
        config.debug_render |= self.debug_render;
        if self.output_dir.is_some() {
            config.output_dir.clone_from(&self.output_dir);
        }
        if config.debug_render && config.output_dir.is_none() {
            return Err(CliError::Input("--debug-render needs --output-dir".into()));
        }
        Ok(config)
    }
}

#[derive(Debug, Clone, Copy, Args)]
pub struct GridArgs {
    /// Inner corners per board row.
    #[arg(long, default_value_t = 4)]
    pub grid_cols: usize,
    /// Inner corners per board column.
    #[arg(long, default_value_t = 3)]
    pub grid_rows: usize,
    /// Corner spacing in centimetres.
    #[arg(long, default_value_t = 1.2)]
    pub grid_spacing: f64,
}

impl GridArgs {
    pub fn layout(&self) -> BoardLayout {
        BoardLayout {
            cols: self.grid_cols,
            rows: self.grid_rows,
            spacing_cm: self.grid_spacing,
        }
    }
}

pub fn parse_ablation(s: &str) -> Result<AblationFlags, String> {
    AblationFlags::parse_list(s)
}

/// Loads a manifest. The mesh database comes from `mesh_db`, then the
/// manifest's own field, then the environment.
pub fn load_dataset(manifest: &Path, mesh_db: Option<&Path>) -> Result<Dataset, CliError> {
    match load_manifest(manifest, mesh_db) {
        Err(DatasetError::NoMeshDb) => match std::env::var_os(MESH_DB_ENV) {
            Some(env) => Ok(load_manifest(manifest, Some(Path::new(&env)))?),
            None => Err(DatasetError::NoMeshDb.into()),
        },
        other => Ok(other?),
    }
}

/// Writes `text` atomically, creating parent directories.
pub(crate) fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    portion3d::io::write_atomic(path, text.as_bytes()).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(CliError::Input("--jobs must be at least 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::Input(format!("thread pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Estimate(a) => estimate::run(&a),
        Command::Evaluate(a) => evaluate::run(&a),
        Command::Synth(a) => synth::run(&a),
        Command::Render(a) => render::run(&a),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn ablation_flags_parse() {
        let cli = Cli::try_parse_from([
            "portion3d", "estimate", "--manifest", "m.json", "--scene", "a", "--ablate", "zero_tx,zero_ty,zero_theta",
        ])
        .unwrap();
        let Command::Estimate(a) = cli.command else { panic!() };
        assert_eq!(a.ablate, Some(AblationFlags::ALL));
        let bad = Cli::try_parse_from(["portion3d", "estimate", "--manifest", "m.json", "--scene", "a", "--ablate", "zero_q"]);
        assert!(bad.unwrap_err().to_string().contains("zero_q"));
    }

    #[test]
    fn config_flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        std::fs::write(&p, "debug_render = false\noutput_dir = \"out\"\n[ablation]\nzero_tx = true\n").unwrap();
        let args = PipelineArgs {
            config: Some(p),
            single_pass: true,
            debug_render: false,
            output_dir: None,
        };
        let c = args.resolve(None).unwrap();
        assert!(c.ablation.zero_tx);
        assert_eq!(c.refine, RefineConfig::SINGLE_PASS);
        assert_eq!(c.output_dir.as_deref(), Some(Path::new("out")));
        let c = args.resolve(Some(AblationFlags::NONE)).unwrap();
        assert_eq!(c.ablation, AblationFlags::NONE);

        let no_dir = PipelineArgs {
            config: None,
            single_pass: false,
            debug_render: true,
            output_dir: None,
        };
        assert_eq!(no_dir.resolve(None).unwrap_err().exit_code(), 2);
    }
}
