//! Exact trainable-parameter accounting per adapter method.
//!
//! Each adapted projection matrix counts once. UORA/VeRA contribute
//! `d_model + r` trainable scalars per projection (the two scaling
//! vectors), LoRA contributes `2 * d_model * r` (both factors).

use super::AdapterMethod;
use crate::linalg::LinalgError;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Trainable-parameter count for one (method, layout) combination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCountReport {
    pub method: AdapterMethod,
    pub l_tuned: u64,
    pub d_model: u64,
    pub r: u64,
    pub trainable_count: u64,
}

impl ParamCountReport {
    /// Table-style rounding: `50688 -> "50.7K"`, `786432 -> "786.4K"`.
    pub fn human(&self) -> String {
        format_count(self.trainable_count)
    }
}

impl fmt::Display for ParamCountReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} L_tuned={} d_model={} r={}: {} trainable ({})",
            self.method,
            self.l_tuned,
            self.d_model,
            self.r,
            self.trainable_count,
            self.human()
        )
    }
}

/// Human-readable count with one decimal (K below a million, M above).
pub fn format_count(count: u64) -> String {
    if count >= 1_000_000 {
        format!("{:.1}M", count as f64 / 1e6)
    } else if count >= 1_000 {
        format!("{:.1}K", count as f64 / 1e3)
    } else {
        count.to_string()
    }
}

/// Exact integer trainable count for `l_tuned` adapted projections of
/// width `d_model` at rank `r`.
pub fn count_params(
    method: AdapterMethod,
    l_tuned: u64,
    d_model: u64,
    r: u64,
) -> Result<ParamCountReport, LinalgError> {
    if l_tuned == 0 || d_model == 0 || r == 0 {
        return Err(LinalgError::Config(format!(
            "count_params requires l_tuned, d_model, r >= 1 (got {l_tuned}, {d_model}, {r})"
        )));
    }
    let per_layer = match method {
        AdapterMethod::Uora | AdapterMethod::Vera => d_model
            .checked_add(r)
            .ok_or_else(|| LinalgError::Config("parameter count overflow".into()))?,
        AdapterMethod::Lora => 2u64
            .checked_mul(d_model)
            .and_then(|v| v.checked_mul(r))
            .ok_or_else(|| LinalgError::Config("parameter count overflow".into()))?,
        AdapterMethod::None => 0,
    };
    let trainable_count = l_tuned
        .checked_mul(per_layer)
        .ok_or_else(|| LinalgError::Config("parameter count overflow".into()))?;
    Ok(ParamCountReport {
        method,
        l_tuned,
        d_model,
        r,
        trainable_count,
    })
}
