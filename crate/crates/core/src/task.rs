//! Synthetic desk-scale tasks. Each regenerates identically from its
//! seed; train and eval splits draw from independent RNG streams.

use crate::linalg::{streams, Matrix, SeededRng, Vector};
use crate::model::{BuiltArch, Model, ModelError, SampleInput};
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Eval,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Eval => "eval",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TaskKind {
    /// Regress onto `(W0 + hidden low-rank delta) x` plus noise, where
    /// `W0` is the model's own frozen weight. The adapter must recover
    /// the hidden delta.
    LowRankRecovery {
        d_out: usize,
        d_in: usize,
        true_rank: usize,
        noise_sigma: f64,
    },
    /// Balanced Gaussian blobs.
    GaussianClassification { n_classes: usize, dim: usize },
    /// Classify a token sequence by its first token.
    SeqCopyClassify { seq_len: usize, vocab: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTask {
    pub kind: TaskKind,
    pub seed: u64,
    pub n_train: usize,
    pub n_eval: usize,
}

/// Loss attached to a task's targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Mse,
    CrossEntropy,
}

#[derive(Debug, Clone)]
pub enum Targets {
    Vectors(Vec<Vector>),
    Labels(Vec<usize>),
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub inputs: Vec<SampleInput>,
    pub targets: Targets,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

impl SyntheticTask {
    pub fn new(kind: TaskKind, seed: u64) -> Self {
        SyntheticTask {
            kind,
            seed,
            n_train: 256,
            n_eval: 256,
        }
    }

    pub fn with_sizes(mut self, n_train: usize, n_eval: usize) -> Self {
        self.n_train = n_train;
        self.n_eval = n_eval;
        self
    }

    pub fn loss_kind(&self) -> LossKind {
        match self.kind {
            TaskKind::LowRankRecovery { .. } => LossKind::Mse,
            _ => LossKind::CrossEntropy,
        }
    }

    pub fn n(&self, split: Split) -> usize {
        match split {
            Split::Train => self.n_train,
            Split::Eval => self.n_eval,
        }
    }

    /// Materialize a split. Pure: every call with the same arguments
    /// builds the same data from fresh stream cursors.
    pub fn dataset(&self, model: &Model, split: Split) -> Result<Dataset, ModelError> {
        let n = self.n(split);
        let stream = match split {
            Split::Train => streams::DATA_TRAIN,
            Split::Eval => streams::DATA_EVAL,
        };
        let mut rng = SeededRng::new(self.seed, stream);
        match &self.kind {
            TaskKind::LowRankRecovery {
                d_out,
                d_in,
                true_rank,
                noise_sigma,
            } => {
                let w0 = recovery_base_weight(model, *d_out, *d_in)?;
                let target_matrix = w0.add(&self.hidden_delta(*d_out, *d_in, *true_rank))?;
                let mut inputs = Vec::with_capacity(n);
                let mut targets = Vec::with_capacity(n);
                for _ in 0..n {
                    let x = Vector::from_vec((0..*d_in).map(|_| rng.normal()).collect());
                    let mut y = target_matrix.matvec(&x)?;
                    for v in y.data_mut() {
                        *v += noise_sigma * rng.normal();
                    }
                    inputs.push(SampleInput::Dense(x));
                    targets.push(y);
                }
                Ok(Dataset {
                    inputs,
                    targets: Targets::Vectors(targets),
                })
            }
            TaskKind::GaussianClassification { n_classes, dim } => {
                if model.input_dim() != Some(*dim) {
                    return Err(ModelError::Config(format!(
                        "model input dim {:?} does not match task dim {dim}",
                        model.input_dim()
                    )));
                }
                if model.output_dim() != *n_classes {
                    return Err(ModelError::Config(format!(
                        "model output dim {} does not match {n_classes} classes",
                        model.output_dim()
                    )));
                }
                let means = self.class_means(*n_classes, *dim);
                let mut inputs = Vec::with_capacity(n);
                let mut labels = Vec::with_capacity(n);
                for i in 0..n {
                    let label = i % n_classes;
                    let mut x = Vector::from_vec((0..*dim).map(|_| rng.normal()).collect());
                    x.add_scaled(1.0, &means[label])?;
                    inputs.push(SampleInput::Dense(x));
                    labels.push(label);
                }
                Ok(Dataset {
                    inputs,
                    targets: Targets::Labels(labels),
                })
            }
            TaskKind::SeqCopyClassify { seq_len, vocab } => {
                match &model.arch {
                    BuiltArch::Transformer(net) => {
                        if net.seq_len != *seq_len || net.vocab != *vocab {
                            return Err(ModelError::Config(format!(
                                "model seq_len/vocab {}x{} does not match task {}x{}",
                                net.seq_len, net.vocab, seq_len, vocab
                            )));
                        }
                    }
                    _ => {
                        return Err(ModelError::Config(
                            "sequence task requires a transformer model".into(),
                        ))
                    }
                }
                if model.output_dim() != *vocab {
                    return Err(ModelError::Config(format!(
                        "model output dim {} does not match vocab {vocab}",
                        model.output_dim()
                    )));
                }
                let mut inputs = Vec::with_capacity(n);
                let mut labels = Vec::with_capacity(n);
                for _ in 0..n {
                    let tokens: Vec<usize> =
                        (0..*seq_len).map(|_| rng.index(*vocab)).collect();
                    labels.push(tokens[0]);
                    inputs.push(SampleInput::Tokens(tokens));
                }
                Ok(Dataset {
                    inputs,
                    targets: Targets::Labels(labels),
                })
            }
        }
    }

    /// Hidden ground-truth delta of the recovery task, scaled so its
    /// output entries are O(1) for unit-normal inputs.
    pub fn hidden_delta(&self, d_out: usize, d_in: usize, true_rank: usize) -> Matrix {
        let mut rng = SeededRng::new(self.seed, streams::TASK_TRUTH);
        let scale = 1.0 / ((true_rank * d_in) as f64).sqrt();
        let b = Matrix::from_vec(
            d_out,
            true_rank,
            (0..d_out * true_rank).map(|_| rng.normal()).collect(),
        )
        .expect("sized");
        let a = Matrix::from_vec(
            true_rank,
            d_in,
            (0..true_rank * d_in).map(|_| rng.normal()).collect(),
        )
        .expect("sized");
        let mut delta = b.matmul(&a).expect("shapes agree");
        delta.scale_in_place(scale);
        delta
    }

    fn class_means(&self, n_classes: usize, dim: usize) -> Vec<Vector> {
        let mut rng = SeededRng::new(self.seed, streams::TASK_TRUTH);
        let scale = 3.0 / (dim as f64).sqrt();
        (0..n_classes)
            .map(|_| Vector::from_vec((0..dim).map(|_| scale * rng.normal()).collect()))
            .collect()
    }
}

fn recovery_base_weight(
    model: &Model,
    d_out: usize,
    d_in: usize,
) -> Result<Matrix, ModelError> {
    let BuiltArch::Mlp(net) = &model.arch else {
        return Err(ModelError::Config(
            "recovery task requires a single-layer mlp model".into(),
        ));
    };
    if net.layers.len() != 1 {
        return Err(ModelError::Config(format!(
            "recovery task requires exactly one linear layer, model has {}",
            net.layers.len()
        )));
    }
    let base = &net.layers[0].base;
    if base.d_out() != d_out || base.d_in() != d_in {
        return Err(ModelError::Config(format!(
            "model layer is {}x{} but task wants {}x{}",
            base.d_out(),
            base.d_in(),
            d_out,
            d_in
        )));
    }
    if model.head.is_some() {
        return Err(ModelError::Config(
            "recovery task model must not have a head".into(),
        ));
    }
    Ok(base.weight().clone())
}
