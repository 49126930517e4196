use crate::{load_dataset, write_file, CliError, PipelineArgs};
use clap::Args;
use portion3d::dataset::{evaluate, render_text_report, rows_to_csv, split_dataset, Dataset, MetricsReport, SceneEntry, SplitTag};
use portion3d::estimate::PipelineConfig;
use portion3d::AblationFlags;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

/// `--ablate` value: one flag set, or every row of the ablation table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AblateArg {
    Flags(AblationFlags),
    Sweep,
}

impl FromStr for AblateArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.trim() == "sweep" {
            Ok(AblateArg::Sweep)
        } else {
            AblationFlags::parse_list(s).map(AblateArg::Flags)
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[arg(long, value_name = "PATH")]
    pub manifest: PathBuf,
    /// Overrides the manifest's `mesh_db`; $PORTION_MESH_DB is the last
    /// fallback.
    #[arg(long, value_name = "DIR")]
    pub mesh_db: Option<PathBuf>,
    /// Evaluate only the test part of a train/test split.
    #[arg(long)]
    pub test_only: bool,
    /// Seed of the stratified split. Without it, `split` tags in the
    /// manifest are used when every scene has one, else seed 0.
    #[arg(long, value_name = "SEED")]
    pub split_seed: Option<u64>,
    #[arg(long, default_value_t = 0.2, value_name = "FRACTION")]
    pub test_fraction: f64,
    /// Comma-separated components to zero, or `sweep` for one report per
    /// ablation row (zero_tx, zero_ty, both, zero_theta_z, none).
    #[arg(long, value_name = "LIST|sweep")]
    pub ablate: Option<AblateArg>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

/// Entries to evaluate and the entries whose mean the baseline predicts.
fn select(ds: &Dataset, a: &EvaluateArgs) -> Result<(Vec<SceneEntry>, Vec<SceneEntry>), CliError> {
    if !a.test_only {
        if a.split_seed.is_some() {
            log::warn!("--split-seed has no effect without --test-only");
        }
        return Ok((ds.entries.clone(), ds.entries.clone()));
    }
    let tagged = !ds.entries.is_empty() && ds.entries.iter().all(|e| e.split.is_some());
    if tagged && a.split_seed.is_none() {
        let (test, train): (Vec<_>, Vec<_>) = ds.entries.iter().cloned().partition(|e| e.split == Some(SplitTag::Test));
        if test.is_empty() || train.is_empty() {
            return Err(CliError::Input("manifest split tags leave the train or test side empty".into()));
        }
        log::info!("using manifest split: {} train, {} test", train.len(), test.len());
        return Ok((test, train));
    }
    let seed = a.split_seed.unwrap_or(0);
    let (train, test) = split_dataset(&ds.entries, a.test_fraction, seed)?;
    log::info!("split seed {seed}: {} train, {} test", train.len(), test.len());
    Ok((test, train))
}

fn write_outputs(dir: &Path, report: &MetricsReport, csv: &str) -> Result<String, CliError> {
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    let text = render_text_report(report);
    write_file(&dir.join("scenes.csv"), csv)?;
    write_file(&dir.join("report.json"), &json)?;
    write_file(&dir.join("report.txt"), &text)?;
    Ok(text)
}

fn evaluate_once(
    ds: &Dataset,
    entries: &[SceneEntry],
    baseline: &[SceneEntry],
    config: &PipelineConfig,
    dir: &Path,
) -> Result<MetricsReport, CliError> {
    let config = PipelineConfig {
        output_dir: Some(dir.to_path_buf()),
        ..config.clone()
    };
    let ev = evaluate(ds, entries, &config, baseline)?;
    let text = write_outputs(dir, &ev.report, &rows_to_csv(&ev.rows))?;
    print!("{text}");
    Ok(ev.report)
}

pub fn run(a: &EvaluateArgs) -> Result<(), CliError> {
    let flags = match a.ablate {
        Some(AblateArg::Flags(f)) => Some(f),
        _ => None,
    };
    let config = a.pipeline.resolve(flags)?;
    let dir = config
        .output_dir
        .clone()
        .ok_or_else(|| CliError::Input("evaluate needs --output-dir (or `output_dir` in --config)".into()))?;
    let ds = load_dataset(&a.manifest, a.mesh_db.as_deref())?;
    let (entries, baseline) = select(&ds, a)?;

    if a.ablate != Some(AblateArg::Sweep) {
        evaluate_once(&ds, &entries, &baseline, &config, &dir)?;
        return Ok(());
    }

    let mut reports = Vec::new();
    for flags in AblationFlags::table_rows() {
        let row = PipelineConfig {
            ablation: flags,
            ..config.clone()
        };
        println!("== {} ==", flags.name());
        reports.push(evaluate_once(&ds, &entries, &baseline, &row, &dir.join(flags.name()))?);
    }
    let json = serde_json::to_string_pretty(&reports).expect("reports serialize");
    write_file(&dir.join("sweep.json"), &json)?;
    let table = sweep_table(&reports);
    write_file(&dir.join("sweep.txt"), &table)?;
    print!("{table}");
    Ok(())
}

fn sweep_table(reports: &[MetricsReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<22} {:>4} {:>10} {:>8} {:>10} {:>8}",
        "ablation", "n", "VMAE", "VMAPE", "EMAE", "EMAPE"
    );
    for r in reports {
        let m = &r.overall;
        let _ = writeln!(
            out,
            "{:<22} {:>4} {:>10.3} {:>7.2}% {:>10.3} {:>7.2}%",
            r.ablation.name(),
            m.n,
            m.vmae,
            m.vmape,
            m.emae,
            m.emape
        );
    }
    out
}
