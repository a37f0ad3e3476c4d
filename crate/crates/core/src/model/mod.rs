//! Desk-scale trainable hosts for the adapters: an MLP and a small
//! pre-norm transformer encoder. Base weights are frozen at build time;
//! the trainable set is exactly the adapter parameters plus the optional
//! classification head.

mod mlp;
mod transformer;

pub use mlp::{MlpNet, MlpTrace};
pub use transformer::{LayerNorm, MiniTransformerNet, TransformerTrace};

use crate::adapter::{
    backward_lora, backward_uora, merge, Adapter, AdapterMethod, FrozenLinear, LoraState,
    SharedFrozen, UoraState,
};
use crate::linalg::{
    init_matrix, outer, streams, InitKind, LinalgError, Matrix, SeededRng, Vector,
};
use crate::reinit::checkpoint::fnv1a64;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Which projection matrices adapters attach to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Projection {
    Query,
    Key,
    Value,
    Output,
    MlpIn,
    MlpOut,
}

impl Projection {
    pub fn as_str(&self) -> &'static str {
        match self {
            Projection::Query => "query",
            Projection::Key => "key",
            Projection::Value => "value",
            Projection::Output => "output",
            Projection::MlpIn => "mlp_in",
            Projection::MlpOut => "mlp_out",
        }
    }
}

impl fmt::Display for Projection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Projection {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "query" | "q" => Ok(Projection::Query),
            "key" | "k" => Ok(Projection::Key),
            "value" | "v" => Ok(Projection::Value),
            "output" | "o" => Ok(Projection::Output),
            "mlp_in" => Ok(Projection::MlpIn),
            "mlp_out" => Ok(Projection::MlpOut),
            other => Err(ModelError::Config(format!(
                "unknown projection '{other}' (expected query|key|value|output|mlp_in|mlp_out)"
            ))),
        }
    }
}

/// Architecture description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Architecture {
    /// Fully connected stack; `widths[0]` is the input dimension.
    Mlp { widths: Vec<usize> },
    /// Pre-norm transformer encoder with learned positional embeddings
    /// and mean pooling.
    MiniTransformer {
        n_blocks: usize,
        d_model: usize,
        n_heads: usize,
        ff_mult: usize,
        seq_len: usize,
        vocab: usize,
    },
}

/// What to build: architecture, adapter placement, method, rank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub architecture: Architecture,
    pub adapted: Vec<Projection>,
    pub method: AdapterMethod,
    pub rank: usize,
    /// Initializer for the frozen UORA/VeRA pair (LoRA's `A` always uses
    /// the conventional kaiming-uniform draw, `B` starts at zero).
    pub init: InitKind,
    /// Output head dimension; `None` means the raw feature vector is the
    /// model output (regression on the last layer).
    pub head_dim: Option<usize>,
    /// Share one frozen pair across same-shape layers. Defaults by
    /// method: VeRA shares, UORA keeps private copies.
    pub share_frozen: Option<bool>,
}

impl ModelSpec {
    pub fn shares_frozen(&self) -> bool {
        self.share_frozen
            .unwrap_or(self.method == AdapterMethod::Vera)
    }
}

/// One linear layer with its (possibly absent) adapter.
#[derive(Debug, Clone)]
pub struct AdaptedLinear {
    pub id: u32,
    pub role: Projection,
    pub base: FrozenLinear,
    pub adapter: Adapter,
}

impl AdaptedLinear {
    pub fn forward(&self, x: &Vector) -> Result<Vector, LinalgError> {
        self.adapter.forward(&self.base, x)
    }

    /// Backprop through this layer: adapter parameter gradients
    /// accumulate into `sink`, the input gradient is returned.
    pub fn backward(
        &self,
        x: &Vector,
        grad_out: &Vector,
        sink: &mut GradStore,
    ) -> Result<Vector, LinalgError> {
        match &self.adapter {
            Adapter::None => self.base.backward_input(grad_out),
            Adapter::Lora(s) => {
                let grads = backward_lora(&self.base, s, x, grad_out)?;
                sink.accumulate_lora(self.id, &grads.a, &grads.b)?;
                Ok(grads.x)
            }
            Adapter::Uora(s) => {
                let grads = backward_uora(&self.base, s, x, grad_out)?;
                sink.accumulate_uora(self.id, &grads.d, &grads.b)?;
                Ok(grads.x)
            }
        }
    }
}

/// Trainable classification/regression head.
#[derive(Debug, Clone)]
pub struct Head {
    pub weight: Matrix,
    pub bias: Vector,
}

impl Head {
    fn new(out_dim: usize, in_dim: usize, rng: &mut SeededRng) -> Self {
        Head {
            weight: init_matrix(InitKind::kaiming(), out_dim, in_dim, rng),
            bias: Vector::zeros(out_dim),
        }
    }

    pub fn forward(&self, features: &Vector) -> Result<Vector, LinalgError> {
        let mut out = self.weight.matvec(features)?;
        out.add_scaled(1.0, &self.bias)?;
        Ok(out)
    }
}

/// One training sample's input.
#[derive(Debug, Clone)]
pub enum SampleInput {
    Dense(Vector),
    Tokens(Vec<usize>),
}

/// Cached activations of one forward pass.
#[derive(Debug)]
pub enum Trace {
    Mlp(MlpTrace),
    Transformer(TransformerTrace),
}

/// Per-parameter gradient accumulator, indexed by layer id.
#[derive(Debug, Clone)]
pub struct GradStore {
    pub layers: Vec<AdapterGrad>,
    pub head_w: Option<Matrix>,
    pub head_b: Option<Vector>,
}

#[derive(Debug, Clone)]
pub enum AdapterGrad {
    None,
    Lora { a: Matrix, b: Matrix },
    Uora { d: Vector, b: Vector },
}

impl GradStore {
    pub fn zeros_like(model: &Model) -> Self {
        let layers = model
            .layers()
            .iter()
            .map(|layer| match &layer.adapter {
                Adapter::None => AdapterGrad::None,
                Adapter::Lora(s) => AdapterGrad::Lora {
                    a: Matrix::zeros(s.a().rows(), s.a().cols()),
                    b: Matrix::zeros(s.b().rows(), s.b().cols()),
                },
                Adapter::Uora(s) => AdapterGrad::Uora {
                    d: Vector::zeros(s.d_vec().len()),
                    b: Vector::zeros(s.b_vec().len()),
                },
            })
            .collect();
        let (head_w, head_b) = match &model.head {
            Some(h) => (
                Some(Matrix::zeros(h.weight.rows(), h.weight.cols())),
                Some(Vector::zeros(h.bias.len())),
            ),
            None => (None, None),
        };
        GradStore {
            layers,
            head_w,
            head_b,
        }
    }

    pub fn reset(&mut self) {
        for g in &mut self.layers {
            match g {
                AdapterGrad::None => {}
                AdapterGrad::Lora { a, b } => {
                    a.data_mut().fill(0.0);
                    b.data_mut().fill(0.0);
                }
                AdapterGrad::Uora { d, b } => {
                    d.data_mut().fill(0.0);
                    b.data_mut().fill(0.0);
                }
            }
        }
        if let Some(w) = &mut self.head_w {
            w.data_mut().fill(0.0);
        }
        if let Some(b) = &mut self.head_b {
            b.data_mut().fill(0.0);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for g in &mut self.layers {
            match g {
                AdapterGrad::None => {}
                AdapterGrad::Lora { a, b } => {
                    a.scale_in_place(factor);
                    b.scale_in_place(factor);
                }
                AdapterGrad::Uora { d, b } => {
                    d.scale_in_place(factor);
                    b.scale_in_place(factor);
                }
            }
        }
        if let Some(w) = &mut self.head_w {
            w.scale_in_place(factor);
        }
        if let Some(b) = &mut self.head_b {
            b.scale_in_place(factor);
        }
    }

    fn accumulate_lora(&mut self, id: u32, ga: &Matrix, gb: &Matrix) -> Result<(), LinalgError> {
        let AdapterGrad::Lora { a, b } = &mut self.layers[id as usize] else {
            return Err(LinalgError::Shape {
                op: "grad_store",
                detail: format!("layer {id} is not a lora slot"),
            });
        };
        for (dst, src) in a.data_mut().iter_mut().zip(ga.data()) {
            *dst += src;
        }
        for (dst, src) in b.data_mut().iter_mut().zip(gb.data()) {
            *dst += src;
        }
        Ok(())
    }

    fn accumulate_uora(&mut self, id: u32, gd: &Vector, gb: &Vector) -> Result<(), LinalgError> {
        let AdapterGrad::Uora { d, b } = &mut self.layers[id as usize] else {
            return Err(LinalgError::Shape {
                op: "grad_store",
                detail: format!("layer {id} is not a uora slot"),
            });
        };
        d.add_scaled(1.0, gd)?;
        b.add_scaled(1.0, gb)?;
        Ok(())
    }

    pub fn accumulate_head(&mut self, g_out: &Vector, features: &Vector) {
        if let Some(w) = &mut self.head_w {
            let gw = outer(g_out, features);
            for (dst, src) in w.data_mut().iter_mut().zip(gw.data()) {
                *dst += src;
            }
        }
        if let Some(b) = &mut self.head_b {
            let _ = b.add_scaled(1.0, g_out);
        }
    }
}

/// A built model: frozen weights, adapters, optional head.
#[derive(Debug, Clone)]
pub struct Model {
    spec: ModelSpec,
    pub arch: BuiltArch,
    pub head: Option<Head>,
}

#[derive(Debug, Clone)]
pub enum BuiltArch {
    Mlp(MlpNet),
    Transformer(MiniTransformerNet),
}

impl Model {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// All linear layers in id order.
    pub fn layers(&self) -> Vec<&AdaptedLinear> {
        match &self.arch {
            BuiltArch::Mlp(net) => net.layers.iter().collect(),
            BuiltArch::Transformer(net) => net.layers().collect(),
        }
    }

    pub fn layers_mut(&mut self) -> Vec<&mut AdaptedLinear> {
        match &mut self.arch {
            BuiltArch::Mlp(net) => net.layers.iter_mut().collect(),
            BuiltArch::Transformer(net) => net.layers_mut().collect(),
        }
    }

    /// Feature dimension entering the head (or the raw output).
    pub fn feature_dim(&self) -> usize {
        match &self.arch {
            BuiltArch::Mlp(net) => net.output_dim(),
            BuiltArch::Transformer(net) => net.d_model,
        }
    }

    pub fn output_dim(&self) -> usize {
        match &self.head {
            Some(h) => h.weight.rows(),
            None => self.feature_dim(),
        }
    }

    pub fn input_dim(&self) -> Option<usize> {
        match &self.arch {
            BuiltArch::Mlp(net) => Some(net.input_dim()),
            BuiltArch::Transformer(_) => None,
        }
    }

    /// Forward pass caching everything backward needs.
    pub fn forward(&self, input: &SampleInput) -> Result<(Vector, Trace), ModelError> {
        let (features, trace) = match (&self.arch, input) {
            (BuiltArch::Mlp(net), SampleInput::Dense(x)) => {
                let (f, t) = net.forward(x)?;
                (f, Trace::Mlp(t))
            }
            (BuiltArch::Transformer(net), SampleInput::Tokens(tokens)) => {
                let (f, t) = net.forward(tokens)?;
                (f, Trace::Transformer(t))
            }
            _ => {
                return Err(ModelError::Config(
                    "input kind does not match architecture".into(),
                ))
            }
        };
        let output = match &self.head {
            Some(h) => h.forward(&features).map_err(ModelError::Linalg)?,
            None => features,
        };
        Ok((output, trace))
    }

    /// Backprop `grad_output` through head and architecture, adding
    /// parameter gradients into `sink`.
    pub fn backward(
        &self,
        trace: &Trace,
        grad_output: &Vector,
        sink: &mut GradStore,
    ) -> Result<(), ModelError> {
        let features = match trace {
            Trace::Mlp(t) => t.features(),
            Trace::Transformer(t) => t.features(),
        };
        let g_features = match &self.head {
            Some(h) => {
                sink.accumulate_head(grad_output, features);
                h.weight.tmatvec(grad_output).map_err(ModelError::Linalg)?
            }
            None => grad_output.clone(),
        };
        match (&self.arch, trace) {
            (BuiltArch::Mlp(net), Trace::Mlp(t)) => net.backward(t, &g_features, sink)?,
            (BuiltArch::Transformer(net), Trace::Transformer(t)) => {
                net.backward(t, &g_features, sink)?
            }
            _ => {
                return Err(ModelError::Config(
                    "trace kind does not match architecture".into(),
                ))
            }
        }
        Ok(())
    }

    /// Trainable scalars held by adapters.
    pub fn adapter_trainable_count(&self) -> usize {
        self.layers()
            .iter()
            .map(|l| l.adapter.trainable_count())
            .sum()
    }

    /// Trainable scalars held by the head.
    pub fn head_trainable_count(&self) -> usize {
        match &self.head {
            Some(h) => h.weight.rows() * h.weight.cols() + h.bias.len(),
            None => 0,
        }
    }

    /// Checksum over every frozen scalar: base weights, embeddings,
    /// layer norms, and the adapters' frozen matrices.
    pub fn frozen_checksum(&self) -> u64 {
        let mut bytes: Vec<u8> = Vec::new();
        let mut push = |vals: &[f64]| {
            for v in vals {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        };
        for layer in self.layers() {
            push(layer.base.weight().data());
            if let Some(b) = layer.base.bias() {
                push(b.data());
            }
            if let Adapter::Uora(s) = &layer.adapter {
                push(s.a().data());
                push(s.b().data());
            }
        }
        if let BuiltArch::Transformer(net) = &self.arch {
            push(net.tok_embed.data());
            push(net.pos_embed.data());
            for ln in net.layer_norms() {
                push(ln.gamma.data());
                push(ln.beta.data());
            }
        }
        fnv1a64(bytes)
    }

    /// Checksum over the UORA frozen pairs only (constant between
    /// recorded reinit events).
    pub fn frozen_adapter_checksum(&self) -> u64 {
        let mut bytes: Vec<u8> = Vec::new();
        for layer in self.layers() {
            if let Adapter::Uora(s) = &layer.adapter {
                for v in s.a().data().iter().chain(s.b().data()) {
                    bytes.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        fnv1a64(bytes)
    }

    /// A copy with every adapter folded into its base weight and
    /// removed; forward outputs agree with the adapted model.
    pub fn merge_all(&self) -> Result<Model, ModelError> {
        let mut merged = self.clone();
        for layer in merged.layers_mut() {
            layer.base = merge(&layer.base, &layer.adapter)?;
            layer.adapter = Adapter::None;
        }
        Ok(merged)
    }
}

/// Draw frozen weights, attach adapters to the listed projections, and
/// initialize the trainable head. Deterministic in `seed`.
pub fn build_model(spec: &ModelSpec, seed: u64) -> Result<Model, ModelError> {
    validate_spec(spec)?;
    let mut base_rng = SeededRng::new(seed, streams::BASE_INIT);
    let mut adapter_rng = SeededRng::new(seed, streams::ADAPTER_INIT);
    let mut head_rng = SeededRng::new(seed, streams::HEAD_INIT);
    let mut builder = AdapterBuilder::new(spec);

    let arch = match &spec.architecture {
        Architecture::Mlp { widths } => BuiltArch::Mlp(MlpNet::build(
            widths,
            spec,
            &mut base_rng,
            &mut adapter_rng,
            &mut builder,
        )?),
        Architecture::MiniTransformer {
            n_blocks,
            d_model,
            n_heads,
            ff_mult,
            seq_len,
            vocab,
        } => BuiltArch::Transformer(MiniTransformerNet::build(
            *n_blocks,
            *d_model,
            *n_heads,
            *ff_mult,
            *seq_len,
            *vocab,
            spec,
            &mut base_rng,
            &mut adapter_rng,
            &mut builder,
        )?),
    };

    let feature_dim = match &arch {
        BuiltArch::Mlp(net) => net.output_dim(),
        BuiltArch::Transformer(net) => net.d_model,
    };
    let head = spec
        .head_dim
        .map(|out| Head::new(out, feature_dim, &mut head_rng));

    Ok(Model {
        spec: spec.clone(),
        arch,
        head,
    })
}

fn validate_spec(spec: &ModelSpec) -> Result<(), ModelError> {
    match &spec.architecture {
        Architecture::Mlp { widths } => {
            if widths.len() < 2 || widths.contains(&0) {
                return Err(ModelError::Config(
                    "mlp needs >= 2 nonzero layer widths".into(),
                ));
            }
            for p in &spec.adapted {
                if !matches!(p, Projection::MlpIn | Projection::MlpOut) {
                    return Err(ModelError::Config(format!(
                        "projection '{p}' does not exist in an mlp"
                    )));
                }
            }
        }
        Architecture::MiniTransformer {
            n_blocks,
            d_model,
            n_heads,
            ff_mult,
            seq_len,
            vocab,
        } => {
            if *n_blocks == 0 || *d_model == 0 || *n_heads == 0 || *ff_mult == 0 || *seq_len == 0
                || *vocab == 0
            {
                return Err(ModelError::Config(
                    "transformer dims must all be nonzero".into(),
                ));
            }
            if d_model % n_heads != 0 {
                return Err(ModelError::Config(format!(
                    "d_model {d_model} not divisible by n_heads {n_heads}"
                )));
            }
        }
    }
    if spec.method != AdapterMethod::None && !spec.adapted.is_empty() && spec.rank == 0 {
        return Err(ModelError::Config("adapter rank must be >= 1".into()));
    }
    Ok(())
}

/// Builds adapters layer by layer, handing out ids and managing the
/// shared frozen pool for VeRA-style sharing.
pub(crate) struct AdapterBuilder {
    method: AdapterMethod,
    rank: usize,
    init: InitKind,
    share: bool,
    adapted: Vec<Projection>,
    next_id: u32,
    next_handle: u64,
    pool: HashMap<(usize, usize), SharedFrozen>,
}

impl AdapterBuilder {
    fn new(spec: &ModelSpec) -> Self {
        AdapterBuilder {
            method: spec.method,
            rank: spec.rank,
            init: spec.init,
            share: spec.shares_frozen(),
            adapted: spec.adapted.clone(),
            next_id: 0,
            next_handle: 0,
            pool: HashMap::new(),
        }
    }

    pub(crate) fn adapts(&self, role: Projection) -> bool {
        self.adapted.contains(&role)
    }

    pub(crate) fn wrap(
        &mut self,
        role: Projection,
        adapt: bool,
        base: FrozenLinear,
        adapter_rng: &mut SeededRng,
    ) -> Result<AdaptedLinear, ModelError> {
        let id = self.next_id;
        self.next_id += 1;
        let adapter = if adapt {
            let (d_out, d_in) = (base.d_out(), base.d_in());
            if self.method != AdapterMethod::None && self.rank > d_out.min(d_in) {
                return Err(ModelError::Config(format!(
                    "rank {} exceeds min dim of {role} projection ({}x{})",
                    self.rank, d_out, d_in
                )));
            }
            match self.method {
                AdapterMethod::None => Adapter::None,
                AdapterMethod::Lora => Adapter::Lora(
                    LoraState::new(d_out, d_in, self.rank, InitKind::kaiming(), adapter_rng)
                        .map_err(|e| ModelError::Config(e.to_string()))?,
                ),
                AdapterMethod::Vera | AdapterMethod::Uora => {
                    if self.share {
                        let key = (d_out, d_in);
                        if !self.pool.contains_key(&key) {
                            let handle = self.next_handle;
                            self.next_handle += 1;
                            let shared = SharedFrozen::draw(
                                handle, d_out, d_in, self.rank, self.init, adapter_rng,
                            )
                            .map_err(|e| ModelError::Config(e.to_string()))?;
                            self.pool.insert(key, shared);
                        }
                        Adapter::Uora(UoraState::from_shared(&self.pool[&key]))
                    } else {
                        Adapter::Uora(
                            UoraState::new(d_out, d_in, self.rank, self.init, adapter_rng)
                                .map_err(|e| ModelError::Config(e.to_string()))?,
                        )
                    }
                }
            }
        } else {
            Adapter::None
        };
        Ok(AdaptedLinear {
            id,
            role,
            base,
            adapter,
        })
    }
}
