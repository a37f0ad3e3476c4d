//! Adapter mechanisms around frozen linear layers.
//!
//! Three methods share one wrapping scheme: LoRA trains a low-rank pair
//! `B A`, while VeRA and UORA freeze a random pair and train only the
//! scaling vectors `d` (rank side) and `b` (output side). UORA is VeRA
//! plus the reinitialization engine; with reinitialization disabled the
//! two are the same state type under different labels.

mod lora;
mod params;
mod uora;

pub use lora::{backward_lora, forward_lora, merge_lora, LoraGrads, LoraState};
pub use params::{count_params, format_count, ParamCountReport};
pub use uora::{
    backward_uora, forward_uora, merge_uora, InitOrigin, MatrixProvenance, SharedFrozen,
    UoraGrads, UoraState,
};

use crate::linalg::{LinalgError, Matrix, Vector};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Which adapter mechanism a layer or run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdapterMethod {
    None,
    Lora,
    Vera,
    Uora,
}

impl AdapterMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            AdapterMethod::None => "none",
            AdapterMethod::Lora => "lora",
            AdapterMethod::Vera => "vera",
            AdapterMethod::Uora => "uora",
        }
    }
}

impl fmt::Display for AdapterMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AdapterMethod {
    type Err = LinalgError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(AdapterMethod::None),
            "lora" => Ok(AdapterMethod::Lora),
            "vera" => Ok(AdapterMethod::Vera),
            "uora" => Ok(AdapterMethod::Uora),
            other => Err(LinalgError::Config(format!(
                "unknown adapter method '{other}' (expected none|lora|vera|uora)"
            ))),
        }
    }
}

/// A linear layer whose weight (and optional bias) never receive
/// gradient updates.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenLinear {
    weight: Matrix,
    bias: Option<Vector>,
}

impl FrozenLinear {
    pub fn new(weight: Matrix, bias: Option<Vector>) -> Result<Self, LinalgError> {
        if let Some(b) = &bias {
            if b.len() != weight.rows() {
                return Err(LinalgError::Shape {
                    op: "frozen_linear",
                    detail: format!("bias len {} != d_out {}", b.len(), weight.rows()),
                });
            }
        }
        Ok(FrozenLinear { weight, bias })
    }

    pub fn d_out(&self) -> usize {
        self.weight.rows()
    }

    pub fn d_in(&self) -> usize {
        self.weight.cols()
    }

    pub fn weight(&self) -> &Matrix {
        &self.weight
    }

    pub fn bias(&self) -> Option<&Vector> {
        self.bias.as_ref()
    }

    /// `W0 x (+ bias)`.
    pub fn forward(&self, x: &Vector) -> Result<Vector, LinalgError> {
        let mut out = self.weight.matvec(x)?;
        if let Some(b) = &self.bias {
            out = out.add(b)?;
        }
        Ok(out)
    }

    /// `W0^T g`, the input gradient of the frozen path.
    pub fn backward_input(&self, grad_out: &Vector) -> Result<Vector, LinalgError> {
        self.weight.tmatvec(grad_out)
    }
}

/// Adapter attachment of one layer.
#[derive(Debug, Clone)]
pub enum Adapter {
    None,
    Lora(LoraState),
    Uora(UoraState),
}

impl Adapter {
    pub fn forward(&self, layer: &FrozenLinear, x: &Vector) -> Result<Vector, LinalgError> {
        match self {
            Adapter::None => layer.forward(x),
            Adapter::Lora(s) => forward_lora(layer, s, x),
            Adapter::Uora(s) => forward_uora(layer, s, x),
        }
    }

    /// Number of scalars the optimizer may touch in this adapter.
    pub fn trainable_count(&self) -> usize {
        match self {
            Adapter::None => 0,
            Adapter::Lora(s) => s.a().rows() * s.a().cols() + s.b().rows() * s.b().cols(),
            Adapter::Uora(s) => s.d_vec().len() + s.b_vec().len(),
        }
    }
}

/// Fold the adapter delta into the frozen weight, producing a plain
/// linear layer with the adapter removed.
pub fn merge(layer: &FrozenLinear, adapter: &Adapter) -> Result<FrozenLinear, LinalgError> {
    match adapter {
        Adapter::None => Ok(layer.clone()),
        Adapter::Lora(s) => merge_lora(layer, s),
        Adapter::Uora(s) => merge_uora(layer, s),
    }
}

pub(crate) fn check_layer_dims(
    op: &'static str,
    layer: &FrozenLinear,
    d_out: usize,
    d_in: usize,
) -> Result<(), LinalgError> {
    if layer.d_out() != d_out || layer.d_in() != d_in {
        return Err(LinalgError::Shape {
            op,
            detail: format!(
                "adapter is {}x{} but layer is {}x{}",
                d_out,
                d_in,
                layer.d_out(),
                layer.d_in()
            ),
        });
    }
    Ok(())
}
