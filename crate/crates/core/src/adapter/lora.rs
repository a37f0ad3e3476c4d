//! LoRA: trainable low-rank weight updates `delta W = B A`.

use super::{check_layer_dims, FrozenLinear};
use crate::linalg::{init_matrix, outer, InitKind, LinalgError, Matrix, SeededRng, Vector};

/// Trainable low-rank pair. `A` is `r x d_in`, `B` is `d_out x r`;
/// `B` starts at zero so the first forward pass equals the frozen layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LoraState {
    a: Matrix,
    b: Matrix,
    rank: usize,
}

impl LoraState {
    pub fn new(
        d_out: usize,
        d_in: usize,
        rank: usize,
        init: InitKind,
        rng: &mut SeededRng,
    ) -> Result<Self, LinalgError> {
        if rank == 0 || rank > d_out.min(d_in) {
            return Err(LinalgError::Config(format!(
                "rank {rank} must be in 1..=min(d_out={d_out}, d_in={d_in})"
            )));
        }
        let a = init_matrix(init, rank, d_in, rng);
        let b = Matrix::zeros(d_out, rank);
        Ok(LoraState { a, b, rank })
    }

    pub(crate) fn from_parts(a: Matrix, b: Matrix) -> Result<Self, LinalgError> {
        if a.rows() != b.cols() {
            return Err(LinalgError::Shape {
                op: "lora_from_parts",
                detail: format!("A is {}x{} but B is {}x{}", a.rows(), a.cols(), b.rows(), b.cols()),
            });
        }
        let rank = a.rows();
        Ok(LoraState { a, b, rank })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn d_out(&self) -> usize {
        self.b.rows()
    }

    pub fn d_in(&self) -> usize {
        self.a.cols()
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    /// Trainable access for the optimizer.
    pub fn a_mut(&mut self) -> &mut Matrix {
        &mut self.a
    }

    pub fn b_mut(&mut self) -> &mut Matrix {
        &mut self.b
    }

    /// Dense `delta W = B A`.
    pub fn delta(&self) -> Result<Matrix, LinalgError> {
        self.b.matmul(&self.a)
    }
}

/// Gradients of the LoRA parameters plus the input.
#[derive(Debug, Clone)]
pub struct LoraGrads {
    pub a: Matrix,
    pub b: Matrix,
    pub x: Vector,
}

/// `W0 x (+ bias) + B (A x)`.
pub fn forward_lora(
    layer: &FrozenLinear,
    s: &LoraState,
    x: &Vector,
) -> Result<Vector, LinalgError> {
    check_layer_dims("forward_lora", layer, s.d_out(), s.d_in())?;
    let base = layer.forward(x)?;
    let u = s.a.matvec(x)?;
    let delta = s.b.matvec(&u)?;
    base.add(&delta)
}

/// Chain rule through `W0 x + B A x` for a loss gradient `grad_out`.
pub fn backward_lora(
    layer: &FrozenLinear,
    s: &LoraState,
    x: &Vector,
    grad_out: &Vector,
) -> Result<LoraGrads, LinalgError> {
    check_layer_dims("backward_lora", layer, s.d_out(), s.d_in())?;
    if x.len() != s.d_in() || grad_out.len() != s.d_out() {
        return Err(LinalgError::Shape {
            op: "backward_lora",
            detail: format!(
                "x len {} / grad len {} vs {}x{}",
                x.len(),
                grad_out.len(),
                s.d_out(),
                s.d_in()
            ),
        });
    }
    let u = s.a.matvec(x)?;
    let bt_g = s.b.tmatvec(grad_out)?;
    let grad_b = outer(grad_out, &u);
    let grad_a = outer(&bt_g, x);
    let mut grad_x = layer.backward_input(grad_out)?;
    let adapter_path = s.a.tmatvec(&bt_g)?;
    grad_x.add_scaled(1.0, &adapter_path)?;
    Ok(LoraGrads {
        a: grad_a,
        b: grad_b,
        x: grad_x,
    })
}

/// Plain linear layer with `W0 + B A` folded in.
pub fn merge_lora(layer: &FrozenLinear, s: &LoraState) -> Result<FrozenLinear, LinalgError> {
    check_layer_dims("merge_lora", layer, s.d_out(), s.d_in())?;
    let merged = layer.weight().add(&s.delta()?)?;
    FrozenLinear::new(merged, layer.bias().cloned())
}
