//! UORA/VeRA: frozen random projection pair with trainable scaling
//! vectors. The forward pass is `W0 x + b_vec ⊙ (B (d_vec ⊙ (A x)))`.

use super::{check_layer_dims, FrozenLinear};
use crate::linalg::{init_matrix, InitKind, LinalgError, Matrix, SeededRng, Vector};
use std::sync::Arc;

/// Initial value of every `d_vec` entry.
pub const D_VEC_INIT: f64 = 0.1;

/// Where a layer's frozen matrices came from: a shared draw reused by
/// several layers, or a private draw / privatized copy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixProvenance {
    SharedHandle(u64),
    PrivateCopy,
}

/// Enough metadata to replay the initial draw of a frozen pair:
/// `(kind, seed, stream, cursor)` fully determine the matrices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitOrigin {
    pub kind: InitKind,
    pub seed: u64,
    pub stream: u64,
    pub cursor_a: u128,
    pub cursor_b: u128,
}

/// A frozen `(A, B)` pair drawn once and shared across layers of the
/// same shape.
#[derive(Debug, Clone)]
pub struct SharedFrozen {
    handle: u64,
    a: Arc<Matrix>,
    b: Arc<Matrix>,
    origin: InitOrigin,
}

impl SharedFrozen {
    pub fn draw(
        handle: u64,
        d_out: usize,
        d_in: usize,
        rank: usize,
        kind: InitKind,
        rng: &mut SeededRng,
    ) -> Result<Self, LinalgError> {
        let (a, b, origin) = draw_pair(d_out, d_in, rank, kind, rng)?;
        Ok(SharedFrozen {
            handle,
            a: Arc::new(a),
            b: Arc::new(b),
            origin,
        })
    }

    pub fn handle(&self) -> u64 {
        self.handle
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn rank(&self) -> usize {
        self.a.rows()
    }

    pub fn d_out(&self) -> usize {
        self.b.rows()
    }

    pub fn d_in(&self) -> usize {
        self.a.cols()
    }
}

fn draw_pair(
    d_out: usize,
    d_in: usize,
    rank: usize,
    kind: InitKind,
    rng: &mut SeededRng,
) -> Result<(Matrix, Matrix, InitOrigin), LinalgError> {
    if rank == 0 || rank > d_out.min(d_in) {
        return Err(LinalgError::Config(format!(
            "rank {rank} must be in 1..=min(d_out={d_out}, d_in={d_in})"
        )));
    }
    let cursor_a = rng.word_pos();
    let a = init_matrix(kind, rank, d_in, rng);
    let cursor_b = rng.word_pos();
    let b = init_matrix(kind, d_out, rank, rng);
    let origin = InitOrigin {
        kind,
        seed: rng.seed(),
        stream: rng.stream(),
        cursor_a,
        cursor_b,
    };
    Ok((a, b, origin))
}

/// One adapted layer's UORA/VeRA state.
///
/// `A` (`r x d_in`) and `B` (`d_out x r`) never receive gradients; they
/// change only through the reinitialization engine. `d_vec` starts at
/// 0.1 and `b_vec` at 0 so a fresh adapter is output-transparent.
#[derive(Debug, Clone)]
pub struct UoraState {
    a: Arc<Matrix>,
    b: Arc<Matrix>,
    d_vec: Vector,
    b_vec: Vector,
    rank: usize,
    provenance: MatrixProvenance,
    origin: InitOrigin,
}

impl UoraState {
    /// Draw a private frozen pair.
    pub fn new(
        d_out: usize,
        d_in: usize,
        rank: usize,
        kind: InitKind,
        rng: &mut SeededRng,
    ) -> Result<Self, LinalgError> {
        let (a, b, origin) = draw_pair(d_out, d_in, rank, kind, rng)?;
        Ok(Self::assemble(
            Arc::new(a),
            Arc::new(b),
            origin,
            MatrixProvenance::PrivateCopy,
        ))
    }

    /// Attach to a shared frozen pair (copy-on-write on first reinit).
    pub fn from_shared(shared: &SharedFrozen) -> Self {
        Self::assemble(
            Arc::clone(&shared.a),
            Arc::clone(&shared.b),
            shared.origin,
            MatrixProvenance::SharedHandle(shared.handle),
        )
    }

    fn assemble(
        a: Arc<Matrix>,
        b: Arc<Matrix>,
        origin: InitOrigin,
        provenance: MatrixProvenance,
    ) -> Self {
        let rank = a.rows();
        let d_out = b.rows();
        UoraState {
            a,
            b,
            d_vec: Vector::filled(rank, D_VEC_INIT),
            b_vec: Vector::zeros(d_out),
            rank,
            provenance,
            origin,
        }
    }

    /// Rebuild from checkpoint parts; vectors and matrices are taken as-is.
    pub(crate) fn from_parts(
        a: Matrix,
        b: Matrix,
        d_vec: Vector,
        b_vec: Vector,
        provenance: MatrixProvenance,
        origin: InitOrigin,
    ) -> Result<Self, LinalgError> {
        if a.rows() != b.cols() || d_vec.len() != a.rows() || b_vec.len() != b.rows() {
            return Err(LinalgError::Shape {
                op: "uora_from_parts",
                detail: format!(
                    "A {}x{}, B {}x{}, d len {}, b len {}",
                    a.rows(),
                    a.cols(),
                    b.rows(),
                    b.cols(),
                    d_vec.len(),
                    b_vec.len()
                ),
            });
        }
        let rank = a.rows();
        Ok(UoraState {
            a: Arc::new(a),
            b: Arc::new(b),
            d_vec,
            b_vec,
            rank,
            provenance,
            origin,
        })
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

    pub fn d_vec(&self) -> &Vector {
        &self.d_vec
    }

    pub fn b_vec(&self) -> &Vector {
        &self.b_vec
    }

    /// Trainable access for the optimizer. Only the vectors are exposed
    /// mutably; the frozen matrices are reachable solely through the
    /// reinitialization engine.
    pub fn d_vec_mut(&mut self) -> &mut Vector {
        &mut self.d_vec
    }

    pub fn b_vec_mut(&mut self) -> &mut Vector {
        &mut self.b_vec
    }

    pub fn provenance(&self) -> MatrixProvenance {
        self.provenance
    }

    pub fn origin(&self) -> &InitOrigin {
        &self.origin
    }

    /// Copy-on-write: detach from a shared pair before mutation.
    pub(crate) fn privatize(&mut self) {
        if let MatrixProvenance::SharedHandle(_) = self.provenance {
            if Arc::strong_count(&self.a) > 1 {
                self.a = Arc::new((*self.a).clone());
            }
            if Arc::strong_count(&self.b) > 1 {
                self.b = Arc::new((*self.b).clone());
            }
            self.provenance = MatrixProvenance::PrivateCopy;
        }
    }

    pub(crate) fn a_row_mut(&mut self, row: usize) -> &mut [f64] {
        Arc::make_mut(&mut self.a).row_mut(row)
    }

    pub(crate) fn set_b_col(&mut self, col: usize, values: &[f64]) {
        Arc::make_mut(&mut self.b).set_col(col, values);
    }

    /// Dense `delta W = diag(b_vec) B diag(d_vec) A`.
    pub fn delta(&self) -> Result<Matrix, LinalgError> {
        let mut scaled_b = (*self.b).clone();
        for i in 0..scaled_b.rows() {
            let bi = self.b_vec.get(i);
            for v in scaled_b.row_mut(i) {
                *v *= bi;
            }
        }
        for j in 0..self.rank {
            let dj = self.d_vec.get(j);
            for i in 0..scaled_b.rows() {
                let v = scaled_b.get(i, j) * dj;
                scaled_b.set(i, j, v);
            }
        }
        scaled_b.matmul(&self.a)
    }
}

/// Gradients of the scaling vectors plus the input.
#[derive(Debug, Clone)]
pub struct UoraGrads {
    pub d: Vector,
    pub b: Vector,
    pub x: Vector,
}

/// `W0 x (+ bias) + b_vec ⊙ (B (d_vec ⊙ (A x)))`.
pub fn forward_uora(
    layer: &FrozenLinear,
    s: &UoraState,
    x: &Vector,
) -> Result<Vector, LinalgError> {
    check_layer_dims("forward_uora", layer, s.d_out(), s.d_in())?;
    let base = layer.forward(x)?;
    let u = s.a.matvec(x)?;
    let du = s.d_vec.hadamard(&u)?;
    let z = s.b.matvec(&du)?;
    let delta = s.b_vec.hadamard(&z)?;
    base.add(&delta)
}

/// Chain rule through the UORA forward pass.
///
/// With `u = A x` and `z = B (d_vec ⊙ u)`:
/// `grad_b = z ⊙ g`, `grad_d = u ⊙ (B^T (b_vec ⊙ g))`,
/// `grad_x = W0^T g + A^T (d_vec ⊙ (B^T (b_vec ⊙ g)))`.
pub fn backward_uora(
    layer: &FrozenLinear,
    s: &UoraState,
    x: &Vector,
    grad_out: &Vector,
) -> Result<UoraGrads, LinalgError> {
    check_layer_dims("backward_uora", layer, s.d_out(), s.d_in())?;
    if x.len() != s.d_in() || grad_out.len() != s.d_out() {
        return Err(LinalgError::Shape {
            op: "backward_uora",
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
    let du = s.d_vec.hadamard(&u)?;
    let z = s.b.matvec(&du)?;
    let grad_b = z.hadamard(grad_out)?;
    let bg = s.b_vec.hadamard(grad_out)?;
    let bt_bg = s.b.tmatvec(&bg)?;
    let grad_d = u.hadamard(&bt_bg)?;
    let mut grad_x = layer.backward_input(grad_out)?;
    let adapter_path = s.a.tmatvec(&s.d_vec.hadamard(&bt_bg)?)?;
    grad_x.add_scaled(1.0, &adapter_path)?;
    Ok(UoraGrads {
        d: grad_d,
        b: grad_b,
        x: grad_x,
    })
}

/// Plain linear layer with `W0 + diag(b) B diag(d) A` folded in.
pub fn merge_uora(layer: &FrozenLinear, s: &UoraState) -> Result<FrozenLinear, LinalgError> {
    check_layer_dims("merge_uora", layer, s.d_out(), s.d_in())?;
    let merged = layer.weight().add(&s.delta()?)?;
    FrozenLinear::new(merged, layer.bias().cloned())
}
