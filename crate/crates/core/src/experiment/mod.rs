//! Config-driven experiment runner: declarative TOML configs, grid
//! expansion over named axes, per-run metrics/manifests, and a
//! deterministic summary table (mean ± sample std over seeds).

mod manifest;

pub use manifest::{config_hash, RunManifest};

use crate::adapter::AdapterMethod;
use crate::linalg::{InitFamily, InitKind};
use crate::model::{build_model, Architecture, ModelSpec, Projection};
use crate::reinit::ReinitConfig;
use crate::task::{Split, SyntheticTask, TaskKind};
use crate::train::{
    evaluate, train, write_csv, write_jsonl, MetricsRecord, OptimKind, ReinitCadence,
    TrainConfig, TrainError,
};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("run diverged in cell '{cell}' (seed {seed}): {source}")]
    Diverged {
        cell: String,
        seed: u64,
        source: TrainError,
    },
    #[error(transparent)]
    Train(#[from] TrainError),
}

fn cfg_err(msg: impl Into<String>) -> ExperimentError {
    ExperimentError::Config(msg.into())
}

// --- declarative config (TOML) ------------------------------------------

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    pub task: TaskSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub reinit: ReinitSection,
    #[serde(default)]
    pub run: RunSection,
    /// Axis name -> value list; the cartesian product defines the cells.
    #[serde(default)]
    pub grid: BTreeMap<String, Vec<toml::Value>>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub architecture: String,
    #[serde(default)]
    pub widths: Vec<usize>,
    #[serde(default)]
    pub n_blocks: Option<usize>,
    #[serde(default)]
    pub d_model: Option<usize>,
    #[serde(default)]
    pub n_heads: Option<usize>,
    #[serde(default)]
    pub ff_mult: Option<usize>,
    #[serde(default)]
    pub seq_len: Option<usize>,
    #[serde(default)]
    pub vocab: Option<usize>,
    #[serde(default)]
    pub adapted: Vec<String>,
    pub method: String,
    pub rank: usize,
    #[serde(default = "default_init")]
    pub init: String,
    #[serde(default = "default_gain")]
    pub gain: f64,
    #[serde(default)]
    pub head_dim: Option<usize>,
    #[serde(default)]
    pub share_frozen: Option<bool>,
}

fn default_init() -> String {
    "orthogonal".to_string()
}

fn default_gain() -> f64 {
    1.0
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSection {
    pub kind: String,
    #[serde(default)]
    pub d_out: Option<usize>,
    #[serde(default)]
    pub d_in: Option<usize>,
    #[serde(default)]
    pub true_rank: Option<usize>,
    #[serde(default)]
    pub noise_sigma: Option<f64>,
    #[serde(default)]
    pub n_classes: Option<usize>,
    #[serde(default)]
    pub dim: Option<usize>,
    #[serde(default)]
    pub seq_len: Option<usize>,
    #[serde(default)]
    pub vocab: Option<usize>,
    /// Base seed; each run uses `seed + run_seed` so the five runs of a
    /// cell draw five task instances.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_n")]
    pub n_train: usize,
    #[serde(default = "default_n")]
    pub n_eval: usize,
}

fn default_n() -> usize {
    256
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default = "default_optimizer")]
    pub optimizer: String,
    #[serde(default = "default_head_lr")]
    pub head_lr: f64,
    #[serde(default = "default_adapter_lr")]
    pub adapter_lr: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_log_interval")]
    pub log_interval: usize,
    #[serde(default)]
    pub eval_interval: Option<usize>,
}

fn default_optimizer() -> String {
    "adam".to_string()
}
fn default_head_lr() -> f64 {
    1e-3
}
fn default_adapter_lr() -> f64 {
    4e-2
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_batch() -> usize {
    32
}
fn default_steps() -> usize {
    500
}
fn default_log_interval() -> usize {
    10
}

impl Default for TrainSection {
    fn default() -> Self {
        toml::from_str("").expect("all fields defaulted")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReinitSection {
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_count_k")]
    pub count_k: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_init")]
    pub rand_init: String,
    #[serde(default = "default_gain")]
    pub rand_gain: f64,
    #[serde(default)]
    pub start_step: u64,
    #[serde(default = "default_cadence")]
    pub cadence: String,
    #[serde(default)]
    pub reset_moments: bool,
}

fn default_tau() -> f64 {
    1e-4
}
fn default_count_k() -> usize {
    1
}
fn default_alpha() -> f64 {
    0.7
}
fn default_cadence() -> String {
    "step".to_string()
}

impl Default for ReinitSection {
    fn default() -> Self {
        toml::from_str("").expect("all fields defaulted")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub out_dir: Option<String>,
    #[serde(default = "default_selection")]
    pub selection: String,
    #[serde(default = "default_format")]
    pub format: String,
}

fn default_seeds() -> Vec<u64> {
    vec![1, 2, 3, 4, 5]
}
fn default_selection() -> String {
    "final".to_string()
}
fn default_format() -> String {
    "csv".to_string()
}

impl Default for RunSection {
    fn default() -> Self {
        toml::from_str("").expect("all fields defaulted")
    }
}

/// Fully resolved configuration of one run (one cell, one seed).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResolvedRun {
    pub model: ModelSpec,
    pub task: SyntheticTask,
    pub train: TrainConfig,
    pub selection: Selection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    Final,
    Best,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricsFormat {
    Csv,
    Jsonl,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ExperimentError> {
        toml::from_str(text).map_err(|e| cfg_err(e.to_string()))
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_toml_str(&text)
    }

    pub fn selection(&self) -> Result<Selection, ExperimentError> {
        match self.run.selection.as_str() {
            "final" => Ok(Selection::Final),
            "best" => Ok(Selection::Best),
            other => Err(cfg_err(format!(
                "run.selection must be 'final' or 'best', got '{other}'"
            ))),
        }
    }

    pub fn format(&self) -> Result<MetricsFormat, ExperimentError> {
        match self.run.format.as_str() {
            "csv" => Ok(MetricsFormat::Csv),
            "jsonl" => Ok(MetricsFormat::Jsonl),
            other => Err(cfg_err(format!(
                "run.format must be 'csv' or 'jsonl', got '{other}'"
            ))),
        }
    }

    fn base_resolved(&self) -> Result<ResolvedRun, ExperimentError> {
        let architecture = match self.model.architecture.as_str() {
            "mlp" => {
                if self.model.widths.len() < 2 {
                    return Err(cfg_err("model.widths needs >= 2 entries for an mlp"));
                }
                Architecture::Mlp {
                    widths: self.model.widths.clone(),
                }
            }
            "transformer" | "mini_transformer" => Architecture::MiniTransformer {
                n_blocks: need(self.model.n_blocks, "model.n_blocks")?,
                d_model: need(self.model.d_model, "model.d_model")?,
                n_heads: need(self.model.n_heads, "model.n_heads")?,
                ff_mult: need(self.model.ff_mult, "model.ff_mult")?,
                seq_len: need(self.model.seq_len, "model.seq_len")?,
                vocab: need(self.model.vocab, "model.vocab")?,
            },
            other => {
                return Err(cfg_err(format!(
                    "model.architecture must be 'mlp' or 'transformer', got '{other}'"
                )))
            }
        };
        let adapted = self
            .model
            .adapted
            .iter()
            .map(|s| Projection::from_str(s).map_err(|e| cfg_err(e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        let method = AdapterMethod::from_str(&self.model.method)
            .map_err(|e| cfg_err(format!("model.method: {e}")))?;
        let init_family = InitFamily::from_str(&self.model.init)
            .map_err(|e| cfg_err(format!("model.init: {e}")))?;
        let init = InitKind::new(init_family, self.model.gain)
            .map_err(|e| cfg_err(format!("model.gain: {e}")))?;

        let kind = match self.task.kind.as_str() {
            "low_rank_recovery" => TaskKind::LowRankRecovery {
                d_out: need(self.task.d_out, "task.d_out")?,
                d_in: need(self.task.d_in, "task.d_in")?,
                true_rank: need(self.task.true_rank, "task.true_rank")?,
                noise_sigma: self.task.noise_sigma.unwrap_or(0.01),
            },
            "gaussian_classification" => TaskKind::GaussianClassification {
                n_classes: need(self.task.n_classes, "task.n_classes")?,
                dim: need(self.task.dim, "task.dim")?,
            },
            "seq_copy_classify" => TaskKind::SeqCopyClassify {
                seq_len: need(self.task.seq_len, "task.seq_len")?,
                vocab: need(self.task.vocab, "task.vocab")?,
            },
            other => {
                return Err(cfg_err(format!(
                    "task.kind must be low_rank_recovery|gaussian_classification|seq_copy_classify, got '{other}'"
                )))
            }
        };
        let task = SyntheticTask::new(kind, self.task.seed)
            .with_sizes(self.task.n_train, self.task.n_eval);

        let optimizer = match self.train.optimizer.as_str() {
            "adam" => OptimKind::Adam,
            "sgd" => OptimKind::Sgd,
            other => {
                return Err(cfg_err(format!(
                    "train.optimizer must be 'adam' or 'sgd', got '{other}'"
                )))
            }
        };
        let rand_family = InitFamily::from_str(&self.reinit.rand_init)
            .map_err(|e| cfg_err(format!("reinit.rand_init: {e}")))?;
        let rand_kind = InitKind::new(rand_family, self.reinit.rand_gain)
            .map_err(|e| cfg_err(format!("reinit.rand_gain: {e}")))?;
        let reinit = ReinitConfig::new(
            self.reinit.tau,
            self.reinit.count_k,
            self.reinit.alpha,
            rand_kind,
        )
        .map_err(|e| cfg_err(format!("reinit: {e}")))?;
        let cadence = match self.reinit.cadence.as_str() {
            "step" => ReinitCadence::Step,
            "epoch" => ReinitCadence::Epoch,
            other => {
                return Err(cfg_err(format!(
                    "reinit.cadence must be 'step' or 'epoch', got '{other}'"
                )))
            }
        };

        if self.run.seeds.is_empty() {
            return Err(cfg_err("run.seeds must not be empty"));
        }

        let selection = self.selection()?;
        let mut train_cfg = TrainConfig {
            optimizer,
            head_lr: self.train.head_lr,
            adapter_lr: self.train.adapter_lr,
            beta1: self.train.beta1,
            beta2: self.train.beta2,
            eps: 1e-8,
            weight_decay: self.train.weight_decay,
            batch_size: self.train.batch_size,
            steps: self.train.steps,
            log_interval: self.train.log_interval,
            eval_interval: self.train.eval_interval,
            seed: 0,
            reinit,
            reinit_start_step: self.reinit.start_step,
            reinit_cadence: cadence,
            reset_moments_on_reinit: self.reinit.reset_moments,
        };
        // Best-epoch selection needs interleaved eval records.
        if selection == Selection::Best && train_cfg.eval_interval.is_none() {
            train_cfg.eval_interval = Some(train_cfg.log_interval);
        }

        Ok(ResolvedRun {
            model: ModelSpec {
                architecture,
                adapted,
                method,
                rank: self.model.rank,
                init,
                head_dim: self.model.head_dim,
                share_frozen: self.model.share_frozen,
            },
            task,
            train: train_cfg,
            selection,
        })
    }
}

fn need<T>(v: Option<T>, field: &str) -> Result<T, ExperimentError> {
    v.ok_or_else(|| cfg_err(format!("missing required field {field}")))
}

// --- grid expansion ------------------------------------------------------

/// One grid cell: ordered (axis, printable value) pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub axes: Vec<(String, String)>,
}

impl Cell {
    pub fn label(&self) -> String {
        if self.axes.is_empty() {
            return "default".to_string();
        }
        self.axes
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn dir_name(&self) -> String {
        let raw = if self.axes.is_empty() {
            "default".to_string()
        } else {
            self.axes
                .iter()
                .map(|(k, v)| format!("{k}-{v}"))
                .collect::<Vec<_>>()
                .join("_")
        };
        raw.chars()
            .map(|c| {
                if c.is_ascii_alphanumeric() || c == '.' || c == '-' || c == '_' {
                    c
                } else {
                    '-'
                }
            })
            .collect()
    }
}

const KNOWN_AXES: &[&str] = &[
    "alpha",
    "tau",
    "count_k",
    "rank",
    "init",
    "method",
    "adapter_lr",
    "head_lr",
    "steps",
    "batch_size",
    "weight_decay",
];

fn value_to_string(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Cartesian product of the grid axes, axis order = config (sorted) order.
pub fn expand_grid(
    grid: &BTreeMap<String, Vec<toml::Value>>,
) -> Result<Vec<Cell>, ExperimentError> {
    for (axis, values) in grid {
        if !KNOWN_AXES.contains(&axis.as_str()) {
            return Err(cfg_err(format!(
                "grid axis '{axis}' does not name a config field (known: {})",
                KNOWN_AXES.join(", ")
            )));
        }
        if values.is_empty() {
            return Err(cfg_err(format!("grid axis '{axis}' has no values")));
        }
    }
    let mut cells = vec![Cell { axes: Vec::new() }];
    for (axis, values) in grid {
        let mut next = Vec::with_capacity(cells.len() * values.len());
        for cell in &cells {
            for value in values {
                let mut axes = cell.axes.clone();
                axes.push((axis.clone(), value_to_string(value)));
                next.push(Cell { axes });
            }
        }
        cells = next;
    }
    Ok(cells)
}

fn apply_axis(resolved: &mut ResolvedRun, axis: &str, value: &str) -> Result<(), ExperimentError> {
    let bad = |what: &str| cfg_err(format!("grid value '{value}' is not a valid {what}"));
    match axis {
        "alpha" => {
            let alpha: f64 = value.parse().map_err(|_| bad("alpha"))?;
            resolved.train.reinit =
                ReinitConfig::new(resolved.train.reinit.tau, resolved.train.reinit.count_k, alpha, resolved.train.reinit.rand_kind)
                    .map_err(|e| cfg_err(e.to_string()))?;
        }
        "tau" => {
            let tau: f64 = value.parse().map_err(|_| bad("tau"))?;
            resolved.train.reinit =
                ReinitConfig::new(tau, resolved.train.reinit.count_k, resolved.train.reinit.alpha, resolved.train.reinit.rand_kind)
                    .map_err(|e| cfg_err(e.to_string()))?;
        }
        "count_k" => {
            let k: usize = value.parse().map_err(|_| bad("count_k"))?;
            resolved.train.reinit =
                ReinitConfig::new(resolved.train.reinit.tau, k, resolved.train.reinit.alpha, resolved.train.reinit.rand_kind)
                    .map_err(|e| cfg_err(e.to_string()))?;
        }
        "rank" => {
            resolved.model.rank = value.parse().map_err(|_| bad("rank"))?;
        }
        "init" => {
            let family = InitFamily::from_str(value).map_err(|e| cfg_err(e.to_string()))?;
            resolved.model.init =
                InitKind::new(family, resolved.model.init.gain).map_err(|e| cfg_err(e.to_string()))?;
        }
        "method" => {
            resolved.model.method =
                AdapterMethod::from_str(value).map_err(|e| cfg_err(e.to_string()))?;
        }
        "adapter_lr" => {
            resolved.train.adapter_lr = value.parse().map_err(|_| bad("adapter_lr"))?;
        }
        "head_lr" => {
            resolved.train.head_lr = value.parse().map_err(|_| bad("head_lr"))?;
        }
        "steps" => {
            resolved.train.steps = value.parse().map_err(|_| bad("steps"))?;
        }
        "batch_size" => {
            resolved.train.batch_size = value.parse().map_err(|_| bad("batch_size"))?;
        }
        "weight_decay" => {
            resolved.train.weight_decay = value.parse().map_err(|_| bad("weight_decay"))?;
        }
        other => return Err(cfg_err(format!("unknown grid axis '{other}'"))),
    }
    Ok(())
}

// --- running -------------------------------------------------------------

/// One summary row: a cell's mean ± sample std over its seeds.
#[derive(Debug, Clone, Serialize)]
pub struct SummaryRow {
    pub cell: String,
    pub axes: Vec<(String, String)>,
    pub seeds: usize,
    pub loss_mean: f64,
    pub loss_std: f64,
    pub acc_mean: Option<f64>,
    pub acc_std: Option<f64>,
    pub selection: Selection,
}

#[derive(Debug)]
pub struct ExperimentReport {
    pub rows: Vec<SummaryRow>,
    pub summary_path: PathBuf,
    pub n_runs: usize,
}

/// Outcome of one run, as used for summaries.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub cell: String,
    pub seed: u64,
    pub loss: f64,
    pub accuracy: Option<f64>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Execute every cell x seed, writing per-run metrics and manifests
/// under `out_dir` plus a deterministic `summary.csv`.
pub fn run_experiment(
    config: &ExperimentConfig,
    out_dir: impl AsRef<Path>,
) -> Result<ExperimentReport, ExperimentError> {
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir)?;
    let base = config.base_resolved()?;
    let cells = expand_grid(&config.grid)?;
    let format = config.format()?;
    let selection = base.selection;

    let mut results: Vec<RunResult> = Vec::new();
    let mut rows: Vec<SummaryRow> = Vec::new();
    let mut n_runs = 0usize;

    for cell in &cells {
        let mut cell_resolved = base.clone();
        for (axis, value) in &cell.axes {
            apply_axis(&mut cell_resolved, axis, value)?;
        }
        let mut cell_losses = Vec::new();
        let mut cell_accs: Vec<f64> = Vec::new();
        for &seed in &config.run.seeds {
            let run_dir = out_dir.join(cell.dir_name()).join(format!("seed-{seed}"));
            std::fs::create_dir_all(&run_dir)?;
            let started = manifest::now_ms();

            let mut resolved = cell_resolved.clone();
            resolved.train.seed = seed;
            // Each seed trains on its own task instance.
            resolved.task.seed = cell_resolved.task.seed.wrapping_add(seed);

            let (loss, accuracy, metrics) = match run_single(&resolved) {
                Ok(v) => v,
                Err(e) => {
                    write_summary(out_dir, &rows)?;
                    return Err(ExperimentError::Diverged {
                        cell: cell.label(),
                        seed,
                        source: e,
                    });
                }
            };
            let metrics_name = match format {
                MetricsFormat::Csv => "metrics.csv",
                MetricsFormat::Jsonl => "metrics.jsonl",
            };
            match format {
                MetricsFormat::Csv => write_csv(&metrics, run_dir.join(metrics_name))?,
                MetricsFormat::Jsonl => write_jsonl(&metrics, run_dir.join(metrics_name))?,
            }
            let manifest = RunManifest {
                schema: "v1".to_string(),
                toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
                config_hash: manifest::config_hash(&resolved),
                cell: cell.axes.iter().cloned().collect(),
                run_seed: seed,
                task_seed: resolved.task.seed,
                started_unix_ms: started,
                finished_unix_ms: manifest::now_ms(),
                metrics_path: metrics_name.to_string(),
                resolved,
            };
            manifest.write(run_dir.join("manifest.json"))?;

            results.push(RunResult {
                cell: cell.label(),
                seed,
                loss,
                accuracy,
            });
            cell_losses.push(loss);
            if let Some(a) = accuracy {
                cell_accs.push(a);
            }
            n_runs += 1;
        }
        let (loss_mean, loss_std) = mean_std(&cell_losses);
        let (acc_mean, acc_std) = if cell_accs.len() == cell_losses.len() {
            let (m, s) = mean_std(&cell_accs);
            (Some(m), Some(s))
        } else {
            (None, None)
        };
        rows.push(SummaryRow {
            cell: cell.label(),
            axes: cell.axes.clone(),
            seeds: config.run.seeds.len(),
            loss_mean,
            loss_std,
            acc_mean,
            acc_std,
            selection,
        });
    }

    let summary_path = write_summary(out_dir, &rows)?;
    Ok(ExperimentReport {
        rows,
        summary_path,
        n_runs,
    })
}

/// Train one resolved run and return its selected eval metric plus the
/// full metrics trace (with the final eval record appended).
fn run_single(
    resolved: &ResolvedRun,
) -> Result<(f64, Option<f64>, Vec<MetricsRecord>), TrainError> {
    let model = build_model(&resolved.model, resolved.train.seed)?;
    let outcome = train(model, &resolved.task, &resolved.train)?;
    let mut metrics = outcome.metrics;
    let mut final_eval = evaluate(&outcome.model, &resolved.task, Split::Eval)?;
    final_eval.step = resolved.train.steps.saturating_sub(1) as u64;
    final_eval.reinit_events_cumulative = outcome.reinit_events_total;
    metrics.push(final_eval.clone());

    let selected = match resolved.selection {
        Selection::Final => &final_eval,
        Selection::Best => metrics
            .iter()
            .filter(|r| r.split == Split::Eval)
            .min_by(|a, b| {
                a.loss
                    .partial_cmp(&b.loss)
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .unwrap_or(&final_eval),
    };
    Ok((selected.loss, selected.accuracy, metrics))
}

/// Deterministic summary CSV: no timestamps, stable column order.
fn write_summary(out_dir: &Path, rows: &[SummaryRow]) -> Result<PathBuf, ExperimentError> {
    let path = out_dir.join("summary.csv");
    std::fs::write(&path, summary_csv(rows))?;
    Ok(path)
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut axis_names: Vec<String> = Vec::new();
    for row in rows {
        for (axis, _) in &row.axes {
            if !axis_names.contains(axis) {
                axis_names.push(axis.clone());
            }
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["schema".to_string(), "cell".to_string()];
    header.extend(axis_names.iter().cloned());
    header.extend(
        [
            "seeds",
            "loss_mean",
            "loss_std",
            "acc_mean",
            "acc_std",
            "selection",
        ]
        .map(String::from),
    );
    w.write_record(&header).expect("in-memory write");
    for row in rows {
        let mut record = vec!["v1".to_string(), row.cell.clone()];
        for axis in &axis_names {
            let value = row
                .axes
                .iter()
                .find(|(a, _)| a == axis)
                .map(|(_, v)| v.clone())
                .unwrap_or_default();
            record.push(value);
        }
        record.push(row.seeds.to_string());
        record.push(format!("{}", row.loss_mean));
        record.push(format!("{}", row.loss_std));
        record.push(row.acc_mean.map(|v| format!("{v}")).unwrap_or_default());
        record.push(row.acc_std.map(|v| format!("{v}")).unwrap_or_default());
        record.push(
            match row.selection {
                Selection::Final => "final",
                Selection::Best => "best",
            }
            .to_string(),
        );
        w.write_record(&record).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flushed")).expect("utf8")
}

/// Recompute a summary from the per-run metrics files on disk (the
/// brute-force check of the summary math).
pub fn recompute_summary(out_dir: impl AsRef<Path>) -> Result<Vec<SummaryRow>, ExperimentError> {
    let out_dir = out_dir.as_ref();
    let mut cells: BTreeMap<String, Vec<(u64, f64, Option<f64>, Selection, Vec<(String, String)>)>> =
        BTreeMap::new();
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(out_dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    for cell_dir in dirs {
        let mut run_dirs: Vec<PathBuf> = std::fs::read_dir(&cell_dir)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.is_dir())
            .collect();
        run_dirs.sort();
        for run_dir in run_dirs {
            let manifest_path = run_dir.join("manifest.json");
            if !manifest_path.exists() {
                continue;
            }
            let manifest = RunManifest::read(&manifest_path)?;
            let metrics_path = run_dir.join(&manifest.metrics_path);
            if !metrics_path.exists() || manifest.metrics_path != "metrics.csv" {
                continue;
            }
            let records = crate::train::read_csv(&metrics_path)?;
            let eval_records: Vec<&MetricsRecord> = records
                .iter()
                .filter(|r| r.split == Split::Eval)
                .collect();
            let selected = match manifest.resolved.selection {
                Selection::Final => eval_records.last().copied(),
                Selection::Best => eval_records.iter().copied().min_by(|a, b| {
                    a.loss
                        .partial_cmp(&b.loss)
                        .unwrap_or(std::cmp::Ordering::Equal)
                }),
            };
            let Some(selected) = selected else { continue };
            let label = if manifest.cell.is_empty() {
                "default".to_string()
            } else {
                manifest
                    .cell
                    .iter()
                    .map(|(k, v)| format!("{k}={v}"))
                    .collect::<Vec<_>>()
                    .join(",")
            };
            cells.entry(label).or_default().push((
                manifest.run_seed,
                selected.loss,
                selected.accuracy,
                manifest.resolved.selection,
                manifest.cell.iter().map(|(k, v)| (k.clone(), v.clone())).collect(),
            ));
        }
    }
    let mut rows = Vec::new();
    for (label, mut runs) in cells {
        runs.sort_by_key(|r| r.0);
        let losses: Vec<f64> = runs.iter().map(|r| r.1).collect();
        let accs: Vec<f64> = runs.iter().filter_map(|r| r.2).collect();
        let (loss_mean, loss_std) = mean_std(&losses);
        let (acc_mean, acc_std) = if accs.len() == losses.len() && !accs.is_empty() {
            let (m, s) = mean_std(&accs);
            (Some(m), Some(s))
        } else {
            (None, None)
        };
        rows.push(SummaryRow {
            cell: label,
            axes: runs[0].4.clone(),
            seeds: runs.len(),
            loss_mean,
            loss_std,
            acc_mean,
            acc_std,
            selection: runs[0].3,
        });
    }
    Ok(rows)
}
