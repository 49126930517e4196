use super::metrics::{baseline_predictor, Field, GroupMetrics};
use super::{Dataset, DatasetError, SceneEntry};
use crate::estimate::{run_pipeline, PipelineConfig, PipelineContext, PipelineOutput, RefineConfig};
use crate::io::write_atomic;
use crate::objectpose::AblationFlags;
use crate::render::{mask_as_rgb, overlay_boundary};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

/// One line of the per-scene CSV. Estimate columns are empty for failed
/// scenes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRow {
    pub scene_id: String,
    pub label: String,
    pub status: String,
    pub stage: String,
    pub area_input: Option<usize>,
    pub area_rendered: Option<f64>,
    pub scale: Option<f64>,
    pub volume_est_ml: Option<f64>,
    pub energy_est_kcal: Option<f64>,
    pub volume_true_ml: f64,
    pub energy_true_kcal: f64,
    pub volume_abs_err_ml: Option<f64>,
    pub volume_pct_err: Option<f64>,
    pub energy_abs_err_kcal: Option<f64>,
    pub energy_pct_err: Option<f64>,
    pub pnp_residual_px: Option<f64>,
    pub tx_cm: Option<f64>,
    pub ty_cm: Option<f64>,
    pub theta_z_rad: Option<f64>,
    pub error: String,
}

impl SceneRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    fn failed(e: &SceneEntry, stage: &str, error: String) -> Self {
        Self {
            scene_id: e.id.clone(),
            label: e.label.clone(),
            status: "failed".into(),
            stage: stage.into(),
            area_input: None,
            area_rendered: None,
            scale: None,
            volume_est_ml: None,
            energy_est_kcal: None,
            volume_true_ml: e.volume_ml,
            energy_true_kcal: e.energy_kcal,
            volume_abs_err_ml: None,
            volume_pct_err: None,
            energy_abs_err_kcal: None,
            energy_pct_err: None,
            pnp_residual_px: None,
            tx_cm: None,
            ty_cm: None,
            theta_z_rad: None,
            error,
        }
    }

    fn succeeded(e: &SceneEntry, out: &PipelineOutput) -> Self {
        let r = &out.record;
        let dv = (r.volume_ml - e.volume_ml).abs();
        let de = (r.energy_kcal - e.energy_kcal).abs();
        Self {
            scene_id: e.id.clone(),
            label: e.label.clone(),
            status: "ok".into(),
            stage: String::new(),
            area_input: Some(r.area_input),
            area_rendered: Some(r.area_rendered),
            scale: Some(r.scale),
            volume_est_ml: Some(r.volume_ml),
            energy_est_kcal: Some(r.energy_kcal),
            volume_true_ml: e.volume_ml,
            energy_true_kcal: e.energy_kcal,
            volume_abs_err_ml: Some(dv),
            volume_pct_err: Some(100.0 * dv / e.volume_ml),
            energy_abs_err_kcal: Some(de),
            energy_pct_err: Some(100.0 * de / e.energy_kcal),
            pnp_residual_px: Some(r.pnp_residual_px),
            tx_cm: Some(r.pose.tx),
            ty_cm: Some(r.pose.ty),
            theta_z_rad: Some(r.pose.theta_z),
            error: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailureSummary {
    pub scene_id: String,
    pub stage: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub dataset: String,
    pub ablation: AblationFlags,
    pub refine: RefineConfig,
    pub n_total: usize,
    pub n_evaluated: usize,
    pub n_failed: usize,
    pub overall: GroupMetrics,
    pub per_food: BTreeMap<String, GroupMetrics>,
    /// Mean-predictor errors over all `n_total` scenes.
    pub baseline: GroupMetrics,
    pub failures: Vec<FailureSummary>,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub rows: Vec<SceneRow>,
}

/// Runs the pipeline on every entry (in parallel on the current rayon pool)
/// and aggregates in entry order. The baseline predicts the mean of
/// `baseline_reference`.
pub fn evaluate(
    dataset: &Dataset,
    entries: &[SceneEntry],
    config: &PipelineConfig,
    baseline_reference: &[SceneEntry],
) -> Result<Evaluation, DatasetError> {
    if entries.is_empty() {
        return Err(DatasetError::Empty);
    }
    let ctx = PipelineContext {
        camera: &dataset.camera,
        board: &dataset.board,
        meshes: &dataset.meshes,
        densities: &dataset.densities,
    };
    let rows: Vec<SceneRow> = entries
        .par_iter()
        .map(|e| {
            let input = match e.to_input() {
                Ok(i) => i,
                Err(msg) => return SceneRow::failed(e, "input", msg),
            };
            match run_pipeline(&input, &ctx, config) {
                Ok(out) => {
                    if config.debug_render {
                        let dir = config.output_dir.clone().unwrap_or_default().join("debug");
                        if let Err(err) = write_debug_images(&dir, &e.id, &out, e.image.as_deref()) {
                            log::warn!("scene {}: debug images not written: {err}", e.id);
                        }
                    }
                    SceneRow::succeeded(e, &out)
                }
                Err(f) => {
                    log::warn!("{f}");
                    SceneRow::failed(e, &f.stage.to_string(), f.error.to_string())
                }
            }
        })
        .collect();

    let ok: Vec<&SceneRow> = rows.iter().filter(|r| r.is_ok()).collect();
    if ok.is_empty() {
        return Err(DatasetError::AllScenesFailed(rows.len()));
    }
    let pairs = |rs: &[&SceneRow]| -> (Vec<(f64, f64)>, Vec<(f64, f64)>) {
        let v = rs.iter().map(|r| (r.volume_true_ml, r.volume_est_ml.unwrap())).collect();
        let e = rs.iter().map(|r| (r.energy_true_kcal, r.energy_est_kcal.unwrap())).collect();
        (v, e)
    };
    let (v, e) = pairs(&ok);
    let overall = GroupMetrics::from_pairs(&v, &e)?;

    let mut by_label: BTreeMap<&str, Vec<&SceneRow>> = BTreeMap::new();
    for r in &ok {
        by_label.entry(&r.label).or_default().push(r);
    }
    let mut per_food = BTreeMap::new();
    for (label, rs) in by_label {
        let (v, e) = pairs(&rs);
        per_food.insert(label.to_string(), GroupMetrics::from_pairs(&v, &e)?);
    }

    let reference = if baseline_reference.is_empty() { entries } else { baseline_reference };
    let v_mean = baseline_predictor(reference, Field::Volume)?[0];
    let e_mean = baseline_predictor(reference, Field::Energy)?[0];
    let bv: Vec<_> = entries.iter().map(|x| (x.volume_ml, v_mean)).collect();
    let be: Vec<_> = entries.iter().map(|x| (x.energy_kcal, e_mean)).collect();
    let baseline = GroupMetrics::from_pairs(&bv, &be)?;

    let failures: Vec<FailureSummary> = rows
        .iter()
        .filter(|r| !r.is_ok())
        .map(|r| FailureSummary {
            scene_id: r.scene_id.clone(),
            stage: r.stage.clone(),
            error: r.error.clone(),
        })
        .collect();
    let report = MetricsReport {
        dataset: dataset.name.clone(),
        ablation: config.ablation,
        refine: config.refine,
        n_total: rows.len(),
        n_evaluated: ok.len(),
        n_failed: failures.len(),
        overall,
        per_food,
        baseline,
        failures,
    };
    Ok(Evaluation { report, rows })
}

pub fn rows_to_csv(rows: &[SceneRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
}

pub fn render_text_report(report: &MetricsReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "dataset: {}", report.dataset);
    let _ = writeln!(out, "ablation: {}", report.ablation.name());
    let _ = writeln!(
        out,
        "scenes: {} evaluated, {} failed, {} total",
        report.n_evaluated, report.n_failed, report.n_total
    );
    let _ = writeln!(
        out,
        "\n{:<20} {:>5} {:>10} {:>9} {:>10} {:>9}",
        "", "N", "VMAE(mL)", "VMAPE(%)", "EMAE(kCal)", "EMAPE(%)"
    );
    let mut line = |name: &str, m: &GroupMetrics| {
        let _ = writeln!(
            out,
            "{:<20} {:>5} {:>10.2} {:>9.2} {:>10.2} {:>9.2}",
            name, m.n, m.vmae, m.vmape, m.emae, m.emape
        );
    };
    line("overall", &report.overall);
    line("baseline (mean)", &report.baseline);
    for (label, m) in &report.per_food {
        line(label, m);
    }
    if !report.failures.is_empty() {
        let _ = writeln!(out, "\nfailures:");
        for f in &report.failures {
            let _ = writeln!(out, "  {} [{}] {}", f.scene_id, f.stage, f.error);
        }
    }
    out
}

/// Writes `<id>_observed.png`, `<id>_rendered.png` and `<id>_overlay.png`.
/// The overlay draws both silhouette boundaries over the scene image when it
/// can be decoded, otherwise over the observed mask.
pub fn write_debug_images(dir: &Path, id: &str, out: &PipelineOutput, image: Option<&Path>) -> Result<(), String> {
    out.observed
        .save_png(&dir.join(format!("{id}_observed.png")))
        .map_err(|e| e.to_string())?;
    out.rendered
        .save_png(&dir.join(format!("{id}_rendered.png")))
        .map_err(|e| e.to_string())?;
    let base = image
        .and_then(|p| match image::open(p) {
            Ok(img) => Some(img.to_rgb8()),
            Err(e) => {
                log::warn!("scene {id}: cannot decode {}: {e}; overlay drawn on the mask", p.display());
                None
            }
        })
        .filter(|img| img.width() as usize == out.observed.width() && img.height() as usize == out.observed.height())
        .unwrap_or_else(|| mask_as_rgb(&out.observed));
    let overlay = overlay_boundary(&base, &out.observed, [0, 200, 0]);
    let overlay = overlay_boundary(&overlay, &out.rendered, [230, 30, 30]);
    let mut bytes = Vec::new();
    overlay
        .write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png)
        .map_err(|e| e.to_string())?;
    write_atomic(&dir.join(format!("{id}_overlay.png")), &bytes).map_err(|e| e.to_string())
}
