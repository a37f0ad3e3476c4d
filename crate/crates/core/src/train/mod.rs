//! Training loop wiring adapters and the reinit engine together.
//!
//! Forward/backward/step over mini-batches; after each optimizer step
//! every UORA layer's monitor examines its `d_vec` and fires
//! reinitializations. Fully deterministic given the config seed: data
//! order, reinit draws, and init each live on their own RNG stream.

mod metrics;
mod optimizer;

pub use metrics::{
    read_csv, to_csv_string, write_csv, write_jsonl, MetricsRecord, CSV_HEADER, METRICS_SCHEMA,
};
pub use optimizer::OptimKind;

use crate::adapter::{Adapter, AdapterMethod};
use crate::linalg::{streams, LinalgError, SeededRng, Vector};
use crate::model::{GradStore, Model, ModelError};
use crate::reinit::checkpoint::{
    snapshot_scaled, CheckpointFile, CheckpointMode, LayerSnapshot,
};
use crate::reinit::{reinit_dimension, ReinitConfig, ReinitError, ReinitMonitor};
use crate::task::{LossKind, Split, SyntheticTask, Targets};
use optimizer::Optimizer;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid train config: {0}")]
    Config(String),
    #[error("loss diverged (non-finite) at step {step} in {location}")]
    Diverged { step: u64, location: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Reinit(#[from] ReinitError),
}

/// When the monitor examines the scaling vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReinitCadence {
    /// After every optimizer step.
    Step,
    /// Only on steps that complete a pass over the training set.
    Epoch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub optimizer: OptimKind,
    pub head_lr: f64,
    pub adapter_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub log_interval: usize,
    /// Interleave eval records every this many steps (for best-epoch
    /// selection). `None` records train metrics only.
    pub eval_interval: Option<usize>,
    pub seed: u64,
    pub reinit: ReinitConfig,
    pub reinit_start_step: u64,
    pub reinit_cadence: ReinitCadence,
    /// Also zero the Adam moments of a reinitialized `d_vec` entry.
    pub reset_moments_on_reinit: bool,
}

impl Default for TrainConfig {
    /// Adam(0.9, 0.999), head lr 1e-3, adapter lr 4e-2.
    fn default() -> Self {
        TrainConfig {
            optimizer: OptimKind::Adam,
            head_lr: 1e-3,
            adapter_lr: 4e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            batch_size: 8,
            steps: 500,
            log_interval: 10,
            eval_interval: None,
            seed: 0,
            reinit: ReinitConfig::default(),
            reinit_start_step: 0,
            reinit_cadence: ReinitCadence::Step,
            reset_moments_on_reinit: false,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), TrainError> {
        if self.head_lr <= 0.0 || self.adapter_lr <= 0.0 {
            return Err(TrainError::Config("learning rates must be > 0".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be >= 1".into()));
        }
        if self.log_interval == 0 {
            return Err(TrainError::Config("log_interval must be >= 1".into()));
        }
        Ok(())
    }
}

/// Everything a finished run hands back: the trained model, the metrics
/// trace, and per-layer monitors (reinit event logs included).
#[derive(Debug)]
pub struct TrainOutcome {
    pub model: Model,
    pub metrics: Vec<MetricsRecord>,
    pub monitors: BTreeMap<u32, ReinitMonitor>,
    pub reinit_events_total: u64,
    pub reinit_seed: u64,
    pub reinit_stream: u64,
}

impl TrainOutcome {
    /// Assemble an adapter checkpoint of every UORA/VeRA layer.
    pub fn checkpoint(&self, mode: CheckpointMode) -> CheckpointFile {
        let mut layers: Vec<LayerSnapshot> = Vec::new();
        for layer in self.model.layers() {
            if let Adapter::Uora(state) = &layer.adapter {
                let monitor = self
                    .monitors
                    .get(&layer.id)
                    .cloned()
                    .unwrap_or_else(|| ReinitMonitor::new(state.rank(), ReinitConfig::disabled()));
                layers.push(snapshot_scaled(
                    layer.id,
                    self.model.spec().method,
                    state,
                    &monitor,
                    mode,
                ));
            }
        }
        CheckpointFile {
            mode,
            reinit_seed: self.reinit_seed,
            reinit_stream: self.reinit_stream,
            layers,
        }
    }
}

/// Mean loss and upstream gradient for one sample.
pub fn loss_and_grad(
    output: &Vector,
    targets: &Targets,
    index: usize,
    kind: LossKind,
) -> Result<(f64, Vector, Option<bool>), TrainError> {
    match (kind, targets) {
        (LossKind::Mse, Targets::Vectors(ys)) => {
            let y = &ys[index];
            if y.len() != output.len() {
                return Err(TrainError::Config(format!(
                    "target dim {} != output dim {}",
                    y.len(),
                    output.len()
                )));
            }
            let n = output.len() as f64;
            let mut grad = Vector::zeros(output.len());
            let mut loss = 0.0;
            for i in 0..output.len() {
                let diff = output.get(i) - y.get(i);
                loss += diff * diff;
                grad.set(i, 2.0 * diff / n);
            }
            Ok((loss / n, grad, None))
        }
        (LossKind::CrossEntropy, Targets::Labels(labels)) => {
            let label = labels[index];
            if label >= output.len() {
                return Err(TrainError::Config(format!(
                    "label {label} out of range for {} logits",
                    output.len()
                )));
            }
            let max = output.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = output.data().iter().map(|v| (v - max).exp()).collect();
            let sum: f64 = exps.iter().sum();
            let mut grad = Vector::zeros(output.len());
            for i in 0..output.len() {
                grad.set(i, exps[i] / sum);
            }
            let loss = -(exps[label] / sum).ln();
            grad.set(label, grad.get(label) - 1.0);
            let predicted = output
                .data()
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
                .map(|(i, _)| i)
                .unwrap_or(0);
            Ok((loss, grad, Some(predicted == label)))
        }
        _ => Err(TrainError::Config(
            "loss kind does not match target kind".into(),
        )),
    }
}

/// `(min, median, max)` of `|d_i|` across every UORA layer; zeros when
/// the model has none.
pub fn d_vec_stats(model: &Model) -> (f64, f64, f64) {
    let mut mags: Vec<f64> = Vec::new();
    for layer in model.layers() {
        if let Adapter::Uora(s) = &layer.adapter {
            mags.extend(s.d_vec().data().iter().map(|v| v.abs()));
        }
    }
    if mags.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    mags.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let min = mags[0];
    let max = mags[mags.len() - 1];
    let median = if mags.len() % 2 == 1 {
        mags[mags.len() / 2]
    } else {
        0.5 * (mags[mags.len() / 2 - 1] + mags[mags.len() / 2])
    };
    (min, median, max)
}

/// Run the training loop. Deterministic in `(model, task, cfg.seed)`.
pub fn train(
    mut model: Model,
    task: &SyntheticTask,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    let data = task.dataset(&model, Split::Train)?;
    if data.is_empty() {
        return Err(TrainError::Config("empty training set".into()));
    }
    let loss_kind = task.loss_kind();

    let mut shuffle_rng = SeededRng::new(cfg.seed, streams::SHUFFLE);
    let mut reinit_rng = SeededRng::new(cfg.seed, streams::REINIT);

    // Only the UORA method reinitializes; VeRA uses the same state type
    // with the engine permanently off.
    let reinit_allowed = model.spec().method == AdapterMethod::Uora;
    let mut monitors: BTreeMap<u32, ReinitMonitor> = BTreeMap::new();
    for layer in model.layers() {
        if let Adapter::Uora(s) = &layer.adapter {
            let config = if reinit_allowed {
                cfg.reinit
            } else {
                ReinitConfig::disabled()
            };
            monitors.insert(layer.id, ReinitMonitor::new(s.rank(), config));
        }
    }

    let mut opt = Optimizer::new(cfg, &model);
    let mut grads = GradStore::zeros_like(&model);
    let mut metrics = Vec::new();
    let mut events_total: u64 = 0;

    let n = data.len();
    let mut order: Vec<usize> = (0..n).collect();
    shuffle_rng.shuffle(&mut order);
    let mut cursor = 0usize;

    let mut interval_loss = 0.0;
    let mut interval_correct = 0usize;
    let mut interval_labeled = 0usize;
    let mut interval_steps = 0usize;
    let started = Instant::now();

    for step in 0..cfg.steps as u64 {
        // Assemble the batch, reshuffling at epoch boundaries.
        let mut epoch_wrapped = false;
        let mut batch = Vec::with_capacity(cfg.batch_size);
        for _ in 0..cfg.batch_size {
            if cursor >= n {
                shuffle_rng.shuffle(&mut order);
                cursor = 0;
                epoch_wrapped = true;
            }
            batch.push(order[cursor]);
            cursor += 1;
        }

        grads.reset();
        let mut batch_loss = 0.0;
        for &idx in &batch {
            let (output, trace) = model.forward(&data.inputs[idx])?;
            let (loss, grad_out, correct) = loss_and_grad(&output, &data.targets, idx, loss_kind)?;
            batch_loss += loss;
            if let Some(c) = correct {
                interval_labeled += 1;
                if c {
                    interval_correct += 1;
                }
            }
            model.backward(&trace, &grad_out, &mut grads)?;
        }
        batch_loss /= cfg.batch_size as f64;
        grads.scale(1.0 / cfg.batch_size as f64);

        if !batch_loss.is_finite() {
            return Err(TrainError::Diverged {
                step,
                location: diagnose_nonfinite(&model),
            });
        }

        opt.step(&mut model, &grads);

        // Examine scaling vectors after the optimizer step.
        let observe = reinit_allowed
            && cfg.reinit.is_enabled()
            && step >= cfg.reinit_start_step
            && match cfg.reinit_cadence {
                ReinitCadence::Step => true,
                ReinitCadence::Epoch => epoch_wrapped,
            };
        if observe {
            for layer in model.layers_mut() {
                let Adapter::Uora(state) = &mut layer.adapter else {
                    continue;
                };
                let monitor = monitors.get_mut(&layer.id).expect("monitor per uora layer");
                let fired = monitor.observe_step(state.d_vec(), step)?;
                for dim in fired {
                    let events =
                        reinit_dimension(state, dim, &cfg.reinit, &mut reinit_rng, step, layer.id)?;
                    monitor.record(&events);
                    events_total += events.len() as u64;
                    if cfg.reset_moments_on_reinit {
                        opt.reset_d_moment(layer.id, dim);
                    }
                }
            }
        }

        interval_loss += batch_loss;
        interval_steps += 1;
        if (step + 1) % cfg.log_interval as u64 == 0 {
            let (d_min, d_med, d_max) = d_vec_stats(&model);
            metrics.push(MetricsRecord {
                step,
                split: Split::Train,
                loss: interval_loss / interval_steps as f64,
                accuracy: if interval_labeled > 0 {
                    Some(interval_correct as f64 / interval_labeled as f64)
                } else {
                    None
                },
                reinit_events_cumulative: events_total,
                d_abs_min: d_min,
                d_abs_median: d_med,
                d_abs_max: d_max,
                wall_ms: started.elapsed().as_secs_f64() * 1e3,
            });
            interval_loss = 0.0;
            interval_correct = 0;
            interval_labeled = 0;
            interval_steps = 0;
        }
        if let Some(every) = cfg.eval_interval {
            if (step + 1) % every as u64 == 0 {
                let mut record = evaluate(&model, task, Split::Eval)?;
                record.step = step;
                record.reinit_events_cumulative = events_total;
                metrics.push(record);
            }
        }
    }

    // The audited trainable set: optimizer slots == adapters + head.
    debug_assert_eq!(
        opt.registered_params(),
        model.adapter_trainable_count() + model.head_trainable_count()
    );

    Ok(TrainOutcome {
        model,
        metrics,
        monitors,
        reinit_events_total: events_total,
        reinit_seed: cfg.seed,
        reinit_stream: streams::REINIT,
    })
}

/// Pure evaluation over a split: no model mutation, no draws from any
/// training stream, identical output on repeated calls.
pub fn evaluate(model: &Model, task: &SyntheticTask, split: Split) -> Result<MetricsRecord, TrainError> {
    let data = task.dataset(model, split)?;
    if data.is_empty() {
        return Err(TrainError::Config("empty evaluation set".into()));
    }
    let loss_kind = task.loss_kind();
    let mut total_loss = 0.0;
    let mut correct = 0usize;
    let mut labeled = 0usize;
    for (idx, input) in data.inputs.iter().enumerate() {
        let (output, _) = model.forward(input)?;
        let (loss, _, was_correct) = loss_and_grad(&output, &data.targets, idx, loss_kind)?;
        total_loss += loss;
        if let Some(c) = was_correct {
            labeled += 1;
            if c {
                correct += 1;
            }
        }
    }
    let (d_min, d_med, d_max) = d_vec_stats(model);
    Ok(MetricsRecord {
        step: 0,
        split,
        loss: total_loss / data.len() as f64,
        accuracy: if labeled > 0 {
            Some(correct as f64 / labeled as f64)
        } else {
            None
        },
        reinit_events_cumulative: 0,
        d_abs_min: d_min,
        d_abs_median: d_med,
        d_abs_max: d_max,
        wall_ms: 0.0,
    })
}

/// Best-effort localization of a divergence: name the first layer or
/// head holding a non-finite parameter.
fn diagnose_nonfinite(model: &Model) -> String {
    for layer in model.layers() {
        let bad = match &layer.adapter {
            Adapter::None => false,
            Adapter::Lora(s) => !s.a().is_finite() || !s.b().is_finite(),
            Adapter::Uora(s) => !s.d_vec().is_finite() || !s.b_vec().is_finite(),
        };
        if bad {
            return format!("layer {} ({} adapter params)", layer.id, layer.role);
        }
    }
    if let Some(h) = &model.head {
        if !h.weight.is_finite() || !h.bias.is_finite() {
            return "head".to_string();
        }
    }
    "loss computation".to_string()
}
