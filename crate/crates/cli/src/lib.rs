//! Command implementations behind the `uora` binary. Each returns a
//! typed error mapping to a documented exit code: 2 invalid config,
//! 3 runtime divergence (partial results retained), 4 replay/checksum
//! verification failure, 1 anything else.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use uora_core::adapter::{count_params, AdapterMethod};
use uora_core::experiment::{
    recompute_summary, run_experiment, summary_csv, ExperimentConfig, ExperimentError,
    ExperimentReport,
};
use uora_core::reinit::checkpoint::{load_checkpoint, verify, CheckpointError};
use uora_core::reinit::ReinitTarget;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Diverged(String),
    Verify(String),
    Other(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "invalid config: {m}"),
            CliError::Diverged(m) => write!(f, "run diverged: {m}"),
            CliError::Verify(m) => write!(f, "verification failed: {m}"),
            CliError::Other(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Diverged(_) => 3,
            CliError::Verify(_) => 4,
            CliError::Other(_) => 1,
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Config(m) => CliError::Config(m),
            ExperimentError::Diverged { .. } => CliError::Diverged(e.to_string()),
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        CliError::Other(e.to_string())
    }
}

/// Flag-level overrides applied on top of the config file.
#[derive(Debug, Default, Clone)]
pub struct RunOverrides {
    pub out: Option<PathBuf>,
    pub seeds: Option<Vec<u64>>,
    /// Extra/replacement grid axes: `KEY=V1,V2`.
    pub grid: Vec<String>,
    pub format: Option<String>,
}

/// Execute an experiment config: all grid cells x seeds, per-run
/// metrics + manifest, and a summary table (also printed).
pub fn cmd_run(
    config_path: &Path,
    overrides: &RunOverrides,
) -> Result<(ExperimentReport, String), CliError> {
    let mut config = ExperimentConfig::from_path(config_path)?;
    if let Some(seeds) = &overrides.seeds {
        if seeds.is_empty() {
            return Err(CliError::Config("--seeds list must not be empty".into()));
        }
        config.run.seeds = seeds.clone();
    }
    if let Some(format) = &overrides.format {
        config.run.format = format.clone();
    }
    for axis_spec in &overrides.grid {
        let (axis, values) = axis_spec
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--grid '{axis_spec}' is not KEY=V1,V2")))?;
        let values: Vec<toml::Value> = values
            .split(',')
            .map(|v| toml::Value::String(v.trim().to_string()))
            .collect();
        if values.is_empty() {
            return Err(CliError::Config(format!("--grid '{axis}' has no values")));
        }
        config.grid.insert(axis.to_string(), values);
    }
    let out_dir = overrides
        .out
        .clone()
        .or_else(|| config.run.out_dir.as_ref().map(PathBuf::from))
        .ok_or_else(|| {
            CliError::Config("no output directory (set run.out_dir or pass --out)".into())
        })?;

    let report = run_experiment(&config, &out_dir)?;
    let mut text = String::new();
    let _ = writeln!(
        text,
        "{} runs across {} cells -> {}",
        report.n_runs,
        report.rows.len(),
        report.summary_path.display()
    );
    text.push_str(&summary_csv(&report.rows));
    Ok((report, text))
}

/// Exact trainable-parameter count plus the table-style rounding.
pub fn cmd_params(method: &str, l_tuned: u64, d_model: u64, r: u64) -> Result<String, CliError> {
    let method = AdapterMethod::from_str(method)
        .map_err(|e| CliError::Config(e.to_string()))?;
    if method == AdapterMethod::None {
        return Err(CliError::Config(
            "method 'none' has no adapter parameters to count".into(),
        ));
    }
    let report = count_params(method, l_tuned, d_model, r)
        .map_err(|e| CliError::Config(e.to_string()))?;
    Ok(format!("{report}\n"))
}

/// Verify a checkpoint: COMPACT layers are reconstructed from seed +
/// event log, FULL layers are checksum-verified in place. One PASS/FAIL
/// line per layer; any failure is an error naming the first divergent
/// layer/dimension.
pub fn cmd_replay(path: &Path) -> Result<String, CliError> {
    let file = load_checkpoint(path)?;
    let reports = verify(&file)?;
    let mut text = String::new();
    let mut first_failure: Option<String> = None;
    for report in &reports {
        let mode = if report.replayed {
            "replayed"
        } else {
            "checksum only"
        };
        if report.passed {
            let _ = writeln!(text, "layer {}: PASS ({mode})", report.layer_id);
        } else {
            let (dim, target) = report
                .first_divergence
                .unwrap_or((0, ReinitTarget::ARow));
            let which = match target {
                ReinitTarget::ARow => "A row",
                ReinitTarget::BCol => "B column",
            };
            let _ = writeln!(
                text,
                "layer {}: FAIL at dimension {dim} ({which}, {mode})",
                report.layer_id
            );
            if first_failure.is_none() {
                first_failure = Some(format!(
                    "layer {} dimension {dim} ({which})",
                    report.layer_id
                ));
            }
        }
    }
    match first_failure {
        None => Ok(text),
        Some(msg) => {
            // The per-layer lines still matter on failure; print them
            // before the error surfaces.
            print!("{text}");
            Err(CliError::Verify(format!("first divergence at {msg}")))
        }
    }
}

/// Recompute the summary of a finished experiment directory from its
/// per-run metrics files.
pub fn cmd_report(out_dir: &Path) -> Result<String, CliError> {
    let rows = recompute_summary(out_dir)?;
    if rows.is_empty() {
        return Err(CliError::Other(format!(
            "no completed runs found under {}",
            out_dir.display()
        )));
    }
    Ok(summary_csv(&rows))
}
