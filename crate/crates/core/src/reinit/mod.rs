//! Trigger-and-reinitialize engine for UORA's frozen matrices.
//!
//! After every optimizer step the monitor examines each entry of the
//! trainable scaling vector `d_vec`. A dimension whose magnitude stays
//! below the threshold `tau` for `count_k` consecutive observations is
//! reinitialized: row `i` of `A` and column `i` of `B` — the unique pair
//! scaled by `d_i` — are replaced by a LERP between their old values and
//! a fresh draw. Every mutation is recorded as an event carrying the RNG
//! cursor of its draw, so the final matrices can be reconstructed exactly
//! from the initial seed plus the ordered event log.

pub mod checkpoint;

use crate::adapter::UoraState;
use crate::linalg::{init_vector, lerp, InitKind, LinalgError, SeededRng, Vector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReinitError {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("dimension {dim} out of range for rank {rank}")]
    Bounds { dim: usize, rank: usize },
    #[error("invalid config: {0}")]
    Config(String),
}

impl From<LinalgError> for ReinitError {
    fn from(e: LinalgError) -> Self {
        match e {
            LinalgError::Shape { op, detail } => ReinitError::Shape { op, detail },
            LinalgError::Config(msg) => ReinitError::Config(msg),
        }
    }
}

/// Trigger-and-interpolation hyperparameters. `count_k == 0` disables
/// the mechanism entirely.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReinitConfig {
    pub tau: f64,
    pub count_k: usize,
    pub alpha: f64,
    pub rand_kind: InitKind,
}

impl ReinitConfig {
    pub fn new(
        tau: f64,
        count_k: usize,
        alpha: f64,
        rand_kind: InitKind,
    ) -> Result<Self, ReinitError> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(ReinitError::Config(format!(
                "tau must be finite and > 0, got {tau}"
            )));
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(ReinitError::Config(format!(
                "alpha must be in [0, 1], got {alpha}"
            )));
        }
        Ok(ReinitConfig {
            tau,
            count_k,
            alpha,
            rand_kind,
        })
    }

    /// `count_k = 0`: the monitor never fires.
    pub fn disabled() -> Self {
        ReinitConfig {
            tau: 1e-4,
            count_k: 0,
            alpha: 0.7,
            rand_kind: InitKind::orthogonal(),
        }
    }

    pub fn is_enabled(&self) -> bool {
        self.count_k > 0
    }
}

impl Default for ReinitConfig {
    /// tau 1e-4, k 1, alpha 0.7 — the tuned starting point.
    fn default() -> Self {
        ReinitConfig {
            tau: 1e-4,
            count_k: 1,
            alpha: 0.7,
            rand_kind: InitKind::orthogonal(),
        }
    }
}

/// Which frozen matrix a reinitialization event touched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ReinitTarget {
    ARow,
    BCol,
}

/// One recorded mutation of a frozen matrix. `rng_cursor` is the word
/// position of the reinit stream just before the fresh draw, which is
/// sufficient to replay it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReinitEvent {
    pub step: u64,
    pub dim: usize,
    pub layer_id: u32,
    pub target: ReinitTarget,
    pub rng_cursor: u128,
}

/// Per-layer consecutive-below-threshold counters plus the append-only
/// event log.
#[derive(Debug, Clone)]
pub struct ReinitMonitor {
    counters: Vec<u32>,
    config: ReinitConfig,
    event_log: Vec<ReinitEvent>,
}

impl ReinitMonitor {
    pub fn new(rank: usize, config: ReinitConfig) -> Self {
        ReinitMonitor {
            counters: vec![0; rank],
            config,
            event_log: Vec::new(),
        }
    }

    pub(crate) fn from_parts(
        counters: Vec<u32>,
        config: ReinitConfig,
        event_log: Vec<ReinitEvent>,
    ) -> Self {
        ReinitMonitor {
            counters,
            config,
            event_log,
        }
    }

    pub fn config(&self) -> &ReinitConfig {
        &self.config
    }

    pub fn counters(&self) -> &[u32] {
        &self.counters
    }

    pub fn events(&self) -> &[ReinitEvent] {
        &self.event_log
    }

    /// Examine `d_vec` after an optimizer step. Returns the dimensions
    /// whose counter just reached `count_k` (those counters reset to 0).
    /// A disabled monitor (`count_k == 0`) never returns anything.
    pub fn observe_step(&mut self, d_vec: &Vector, _step: u64) -> Result<Vec<usize>, ReinitError> {
        if d_vec.len() != self.counters.len() {
            return Err(ReinitError::Shape {
                op: "observe_step",
                detail: format!(
                    "d_vec len {} vs counters len {}",
                    d_vec.len(),
                    self.counters.len()
                ),
            });
        }
        let mut fired = Vec::new();
        if self.config.count_k == 0 {
            return Ok(fired);
        }
        for (i, counter) in self.counters.iter_mut().enumerate() {
            if d_vec.get(i).abs() < self.config.tau {
                *counter += 1;
                if *counter as usize == self.config.count_k {
                    fired.push(i);
                    *counter = 0;
                }
            } else {
                *counter = 0;
            }
        }
        Ok(fired)
    }

    /// Append events; the log stays strictly ordered by
    /// (step, dimension, target).
    pub fn record(&mut self, events: &[ReinitEvent]) {
        for ev in events {
            if let Some(last) = self.event_log.last() {
                debug_assert!(
                    (last.step, last.dim, last.target) < (ev.step, ev.dim, ev.target),
                    "event log must stay strictly ordered"
                );
            }
            self.event_log.push(*ev);
        }
    }
}

/// Replace row `dim` of `A` and column `dim` of `B` with a LERP between
/// their old values and fresh draws from the reinit stream. The scaling
/// vectors are untouched. A state attached to a shared pair is
/// privatized (copy-on-write) before mutation. Returns the two events
/// describing the mutation; the RNG advances even at `alpha = 1`.
pub fn reinit_dimension(
    state: &mut UoraState,
    dim: usize,
    config: &ReinitConfig,
    rng: &mut SeededRng,
    step: u64,
    layer_id: u32,
) -> Result<[ReinitEvent; 2], ReinitError> {
    if dim >= state.rank() {
        return Err(ReinitError::Bounds {
            dim,
            rank: state.rank(),
        });
    }
    state.privatize();
    let d_in = state.d_in();
    let d_out = state.d_out();
    let rank = state.rank();

    let cursor_a = rng.word_pos();
    let fresh_row = init_vector(config.rand_kind, d_in, d_in, rank, rng);
    let old_row = Vector::from_slice(state.a().row(dim));
    let new_row = lerp(&old_row, &fresh_row, config.alpha)?;
    state.a_row_mut(dim).copy_from_slice(new_row.data());

    let cursor_b = rng.word_pos();
    let fresh_col = init_vector(config.rand_kind, d_out, rank, d_out, rng);
    let old_col = Vector::from_vec(state.b().col(dim));
    let new_col = lerp(&old_col, &fresh_col, config.alpha)?;
    state.set_b_col(dim, new_col.data());

    Ok([
        ReinitEvent {
            step,
            dim,
            layer_id,
            target: ReinitTarget::ARow,
            rng_cursor: cursor_a,
        },
        ReinitEvent {
            step,
            dim,
            layer_id,
            target: ReinitTarget::BCol,
            rng_cursor: cursor_b,
        },
    ])
}
