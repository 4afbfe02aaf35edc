//! Experiment harness: run the {model x mode x pretrained} grid described by
//! a plan file, writing split manifests, weights, training logs, per-cell
//! reports, combined tables, and a run summary.

use crate::collage::CollageLayout;
use crate::eval::{evaluate, render_report, EvalError, EvalMode, MetricsReport};
use crate::ingest::{load_dataset, manifest_rows_for, write_manifest, IngestError};
use crate::model::{build_model, ArchitectureKind, ModelError};
use crate::split::{stratified_split, SplitError, SplitSpec};
use crate::train::{train_with_progress, EpochStats, TrainConfig, TrainError, TrainRecord};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Environment variable naming a directory searched for
/// `<architecture>.weights` when a pretrained cell has no explicit path.
pub const WEIGHTS_DIR_ENV: &str = "MVGRADE_WEIGHTS_DIR";

pub const PLAN_SCHEMA_VERSION: u32 = 1;
pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment plan: {0}")]
    InvalidPlan(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("i/o error at {0}: {1}")]
    Io(PathBuf, String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainedWeights {
    pub resnet18: Option<PathBuf>,
    pub squeezenet: Option<PathBuf>,
}

impl PretrainedWeights {
    fn for_kind(&self, kind: ArchitectureKind) -> Option<PathBuf> {
        let explicit = match kind {
            ArchitectureKind::ResNet18 => self.resnet18.clone(),
            ArchitectureKind::SqueezeNet => self.squeezenet.clone(),
        };
        explicit.or_else(|| {
            std::env::var_os(WEIGHTS_DIR_ENV).map(|dir| {
                Path::new(&dir).join(format!("{}.weights", kind.cli_name()))
            })
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentPlan {
    pub schema_version: u32,
    pub dataset_root: PathBuf,
    pub output_dir: PathBuf,
    pub models: Vec<ArchitectureKind>,
    pub modes: Vec<EvalMode>,
    pub pretrained: Vec<bool>,
    pub split: SplitSpec,
    pub train: TrainConfig,
    pub layout: CollageLayout,
    pub pretrained_weights: PretrainedWeights,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        ExperimentPlan {
            schema_version: PLAN_SCHEMA_VERSION,
            dataset_root: PathBuf::from("."),
            output_dir: PathBuf::from("./experiment_out"),
            models: vec![ArchitectureKind::ResNet18, ArchitectureKind::SqueezeNet],
            modes: vec![EvalMode::Multiview, EvalMode::SingleView(0)],
            pretrained: vec![false],
            split: SplitSpec { train_fraction: "0.7".parse().unwrap(), seed: 0 },
            train: TrainConfig::default(),
            layout: CollageLayout::default(),
            pretrained_weights: PretrainedWeights::default(),
        }
    }
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.schema_version != PLAN_SCHEMA_VERSION {
            return Err(ExperimentError::InvalidPlan(format!(
                "unsupported schema_version {} (expected {PLAN_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.models.is_empty() || self.modes.is_empty() || self.pretrained.is_empty() {
            return Err(ExperimentError::InvalidPlan(
                "plan needs at least one model, one mode, and one pretrained setting".into(),
            ));
        }
        self.layout.validate().map_err(ExperimentError::InvalidPlan)?;
        self.train.validate()?;
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        serde_json::from_str(text)
            .map_err(|e| ExperimentError::InvalidPlan(format!("plan does not parse: {e}")))
    }
}

/// Full per-cell report document as written to disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportDocument {
    pub schema_version: u32,
    pub model: ArchitectureKind,
    pub mode: EvalMode,
    pub pretrained: bool,
    pub confusion: crate::eval::ConfusionMatrix,
    pub per_class: [f64; 3],
    pub average: f64,
    pub overall: f64,
    pub seed: u64,
    pub train: TrainConfig,
    pub layout: CollageLayout,
    pub split: SplitSpec,
    pub training_record: TrainRecord,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    Skipped,
    Failed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellOutcome {
    pub model: ArchitectureKind,
    pub mode: EvalMode,
    pub pretrained: bool,
    pub status: CellStatus,
    pub report_file: Option<PathBuf>,
    pub message: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub cells: Vec<CellOutcome>,
    pub tables: Vec<PathBuf>,
    pub train_manifest: PathBuf,
    pub test_manifest: PathBuf,
}

fn mode_tag(mode: EvalMode) -> String {
    match mode {
        EvalMode::Multiview => "multiview".to_string(),
        EvalMode::SingleView(i) => format!("single_view_{i}"),
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), ExperimentError> {
    fs::write(path, text).map_err(|e| ExperimentError::Io(path.to_path_buf(), e.to_string()))
}

/// Execute the whole grid. A failed training or evaluation aborts the
/// remaining cells; pretrained cells with no weight archive configured are
/// skipped with a warning instead.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<RunSummary, ExperimentError> {
    run_experiment_with_progress(plan, &mut |_, _| {})
}

pub fn run_experiment_with_progress(
    plan: &ExperimentPlan,
    progress: &mut dyn FnMut(&str, &EpochStats),
) -> Result<RunSummary, ExperimentError> {
    plan.validate()?;
    fs::create_dir_all(&plan.output_dir)
        .map_err(|e| ExperimentError::Io(plan.output_dir.clone(), e.to_string()))?;

    let dataset = load_dataset(&plan.dataset_root)?;
    let split = stratified_split(&dataset, &plan.split)?;
    let train_manifest = plan.output_dir.join("train_manifest.csv");
    let test_manifest = plan.output_dir.join("test_manifest.csv");
    write_manifest(&manifest_rows_for(&split.train), &train_manifest)?;
    write_manifest(&manifest_rows_for(&split.test), &test_manifest)?;

    let mut cells: Vec<CellOutcome> = Vec::new();
    let mut reports: Vec<(EvalMode, bool, MetricsReport)> = Vec::new();
    let mut aborted = false;

    for &pretrained in &plan.pretrained {
        for &mode in &plan.modes {
            for &kind in &plan.models {
                if aborted {
                    break;
                }
                let cell_name =
                    format!("{}_{}_{}", kind.cli_name(), mode_tag(mode), if pretrained { "pretrained" } else { "scratch" });
                let weights = pretrained.then(|| plan.pretrained_weights.for_kind(kind)).flatten();
                if pretrained && weights.as_deref().map_or(true, |p| !p.is_file()) {
                    cells.push(CellOutcome {
                        model: kind,
                        mode,
                        pretrained,
                        status: CellStatus::Skipped,
                        report_file: None,
                        message: Some(format!(
                            "no pretrained weight archive configured for {} (set the plan's \
                             pretrained_weights entry or {WEIGHTS_DIR_ENV}); cell skipped",
                            kind.cli_name()
                        )),
                    });
                    continue;
                }

                match run_cell(plan, &split.train, &split.test, kind, mode, pretrained, weights.as_deref(), &cell_name, progress) {
                    Ok((report, report_file)) => {
                        reports.push((mode, pretrained, report));
                        cells.push(CellOutcome {
                            model: kind,
                            mode,
                            pretrained,
                            status: CellStatus::Ok,
                            report_file: Some(report_file),
                            message: None,
                        });
                    }
                    Err(e) => {
                        cells.push(CellOutcome {
                            model: kind,
                            mode,
                            pretrained,
                            status: CellStatus::Failed,
                            report_file: None,
                            message: Some(e.to_string()),
                        });
                        aborted = true;
                    }
                }
            }
        }
    }

    // one combined table per (mode, pretrained) pair, mirroring the
    // reference table shape (one row per model)
    let mut tables = Vec::new();
    for &pretrained in &plan.pretrained {
        for &mode in &plan.modes {
            let rows: Vec<MetricsReport> = reports
                .iter()
                .filter(|(m, p, _)| *m == mode && *p == pretrained)
                .map(|(_, _, r)| r.clone())
                .collect();
            if rows.is_empty() {
                continue;
            }
            let path = plan.output_dir.join(format!(
                "table_{}_{}.txt",
                mode_tag(mode),
                if pretrained { "pretrained" } else { "scratch" }
            ));
            write_text(&path, &render_report(&rows))?;
            tables.push(path);
        }
    }

    let summary = RunSummary { cells, tables, train_manifest, test_manifest };
    let summary_json = serde_json::to_string_pretty(&summary)
        .map_err(|e| ExperimentError::Io(plan.output_dir.clone(), e.to_string()))?;
    write_text(&plan.output_dir.join("run_summary.json"), &summary_json)?;
    Ok(summary)
}

#[allow(clippy::too_many_arguments)]
fn run_cell(
    plan: &ExperimentPlan,
    train_set: &crate::domain::Dataset,
    test_set: &crate::domain::Dataset,
    kind: ArchitectureKind,
    mode: EvalMode,
    pretrained: bool,
    weights: Option<&Path>,
    cell_name: &str,
    progress: &mut dyn FnMut(&str, &EpochStats),
) -> Result<(MetricsReport, PathBuf), ExperimentError> {
    let model = build_model(kind, 3, pretrained, weights, plan.train.seed)?;

    let mut config = plan.train.clone();
    config.single_view = match mode {
        EvalMode::Multiview => None,
        EvalMode::SingleView(index) => Some(index),
    };

    let (mut model, record) =
        train_with_progress(model, train_set, &plan.layout, &config, &mut |stats| {
            progress(cell_name, stats)
        })?;

    model.save(&plan.output_dir.join(format!("{cell_name}.weights")))?;
    write_text(&plan.output_dir.join(format!("{cell_name}.log")), &record.log_text())?;

    let report = evaluate(&model, test_set, &plan.layout, mode)?;
    let document = ReportDocument {
        schema_version: REPORT_SCHEMA_VERSION,
        model: kind,
        mode,
        pretrained,
        confusion: report.confusion,
        per_class: report.per_class,
        average: report.average,
        overall: report.overall,
        seed: plan.train.seed,
        train: config,
        layout: plan.layout.clone(),
        split: plan.split,
        training_record: record,
    };
    let report_file = plan.output_dir.join(format!("report_{cell_name}.json"));
    let json = serde_json::to_string_pretty(&document)
        .map_err(|e| ExperimentError::Io(report_file.clone(), e.to_string()))?;
    write_text(&report_file, &json)?;
    Ok((report, report_file))
}
