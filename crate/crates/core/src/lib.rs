//! Parameter-efficient fine-tuning adapters with selective reinitialization.
//!
//! This crate implements three adapter mechanisms around frozen linear
//! layers — LoRA (trainable low-rank factors), VeRA (frozen random factors
//! with trainable scaling vectors), and UORA (VeRA plus an
//! interpolation-based reinitialization of under-used rows/columns of the
//! frozen factors) — together with everything needed to study them at desk
//! scale: dense f64 linear algebra, seeded multi-stream RNG, analytic
//! gradients, adapter merging, exact parameter accounting, a checkpoint
//! codec with seed+event-log replay, toy trainable models, synthetic tasks,
//! and a config-driven experiment grid runner.

pub mod adapter;
pub mod experiment;
pub mod linalg;
pub mod model;
pub mod reinit;
pub mod task;
pub mod train;

pub use adapter::{AdapterMethod, FrozenLinear, LoraState, ParamCountReport, UoraState};
pub use linalg::{InitFamily, InitKind, Matrix, SeededRng, Vector};
pub use reinit::{ReinitConfig, ReinitEvent, ReinitMonitor};
