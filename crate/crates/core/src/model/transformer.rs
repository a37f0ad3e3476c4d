//! Mini pre-norm transformer encoder.
//!
//! Per block: `x += attn(ln1(x))` then `x += ff(ln2(x))`, multi-head
//! scaled dot-product attention (bidirectional), ReLU feed-forward,
//! learned positional embeddings, final layer norm, mean pooling. All
//! base weights (embeddings, norms, projections) are frozen; only
//! attached adapters train.

use super::{AdaptedLinear, AdapterBuilder, GradStore, ModelError, ModelSpec, Projection};
use crate::adapter::FrozenLinear;
use crate::linalg::{init_matrix, InitKind, SeededRng, Vector};

const LN_EPS: f64 = 1e-5;

/// Frozen layer norm parameters (gamma 1, beta 0 at init).
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: Vector,
    pub beta: Vector,
}

#[derive(Debug)]
pub(crate) struct LnRowTrace {
    x_hat: Vector,
    inv_std: f64,
}

impl LayerNorm {
    fn new(dim: usize) -> Self {
        LayerNorm {
            gamma: Vector::filled(dim, 1.0),
            beta: Vector::zeros(dim),
        }
    }

    fn forward(&self, x: &Vector) -> (Vector, LnRowTrace) {
        let n = x.len() as f64;
        let mu = x.data().iter().sum::<f64>() / n;
        let var = x.data().iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
        let inv_std = 1.0 / (var + LN_EPS).sqrt();
        let x_hat = Vector::from_vec(x.data().iter().map(|v| (v - mu) * inv_std).collect());
        let y = Vector::from_vec(
            x_hat
                .data()
                .iter()
                .zip(self.gamma.data())
                .zip(self.beta.data())
                .map(|((xh, g), b)| xh * g + b)
                .collect(),
        );
        (y, LnRowTrace { x_hat, inv_std })
    }

    fn backward(&self, trace: &LnRowTrace, grad_y: &Vector) -> Vector {
        let n = grad_y.len() as f64;
        let g_hat: Vec<f64> = grad_y
            .data()
            .iter()
            .zip(self.gamma.data())
            .map(|(g, gam)| g * gam)
            .collect();
        let mean_g: f64 = g_hat.iter().sum::<f64>() / n;
        let mean_gx: f64 = g_hat
            .iter()
            .zip(trace.x_hat.data())
            .map(|(g, xh)| g * xh)
            .sum::<f64>()
            / n;
        Vector::from_vec(
            g_hat
                .iter()
                .zip(trace.x_hat.data())
                .map(|(g, xh)| trace.inv_std * (g - mean_g - xh * mean_gx))
                .collect(),
        )
    }
}

#[derive(Debug, Clone)]
pub struct Block {
    pub ln1: LayerNorm,
    pub wq: AdaptedLinear,
    pub wk: AdaptedLinear,
    pub wv: AdaptedLinear,
    pub wo: AdaptedLinear,
    pub ln2: LayerNorm,
    pub ff1: AdaptedLinear,
    pub ff2: AdaptedLinear,
}

#[derive(Debug, Clone)]
pub struct MiniTransformerNet {
    pub d_model: usize,
    pub n_heads: usize,
    pub seq_len: usize,
    pub vocab: usize,
    pub tok_embed: crate::linalg::Matrix,
    pub pos_embed: crate::linalg::Matrix,
    pub blocks: Vec<Block>,
    pub final_ln: LayerNorm,
}

#[derive(Debug)]
pub(crate) struct BlockTrace {
    ln1: Vec<LnRowTrace>,
    xn1: Vec<Vector>,
    q: Vec<Vector>,
    k: Vec<Vector>,
    v: Vec<Vector>,
    /// Attention probabilities per head: `probs[h][i][j]`.
    probs: Vec<Vec<Vec<f64>>>,
    ctx: Vec<Vector>,
    ln2: Vec<LnRowTrace>,
    xn2: Vec<Vector>,
    ff_pre: Vec<Vector>,
    ff_act: Vec<Vector>,
}

#[derive(Debug)]
pub struct TransformerTrace {
    blocks: Vec<BlockTrace>,
    final_ln: Vec<LnRowTrace>,
    features: Vector,
}

impl TransformerTrace {
    pub fn features(&self) -> &Vector {
        &self.features
    }
}

impl MiniTransformerNet {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn build(
        n_blocks: usize,
        d_model: usize,
        n_heads: usize,
        ff_mult: usize,
        seq_len: usize,
        vocab: usize,
        _spec: &ModelSpec,
        base_rng: &mut SeededRng,
        adapter_rng: &mut SeededRng,
        builder: &mut AdapterBuilder,
    ) -> Result<Self, ModelError> {
        // Embeddings on the usual small-normal scale.
        let embed_scale = 0.02;
        let draw_embed = |rows: usize, cols: usize, rng: &mut SeededRng| {
            let data = (0..rows * cols).map(|_| embed_scale * rng.normal()).collect();
            crate::linalg::Matrix::from_vec(rows, cols, data).expect("sized")
        };
        let tok_embed = draw_embed(vocab, d_model, base_rng);
        let pos_embed = draw_embed(seq_len, d_model, base_rng);

        let mut blocks = Vec::with_capacity(n_blocks);
        for _ in 0..n_blocks {
            let proj = |d_out: usize, d_in: usize, rng: &mut SeededRng| {
                FrozenLinear::new(init_matrix(InitKind::xavier(), d_out, d_in, rng), None)
            };
            let wq_base = proj(d_model, d_model, base_rng)?;
            let wk_base = proj(d_model, d_model, base_rng)?;
            let wv_base = proj(d_model, d_model, base_rng)?;
            let wo_base = proj(d_model, d_model, base_rng)?;
            let ff1_base = proj(ff_mult * d_model, d_model, base_rng)?;
            let ff2_base = proj(d_model, ff_mult * d_model, base_rng)?;
            let adapts = |b: &AdapterBuilder, p: Projection| b.adapts(p);
            let wq = {
                let adapt = adapts(builder, Projection::Query);
                builder.wrap(Projection::Query, adapt, wq_base, adapter_rng)?
            };
            let wk = {
                let adapt = adapts(builder, Projection::Key);
                builder.wrap(Projection::Key, adapt, wk_base, adapter_rng)?
            };
            let wv = {
                let adapt = adapts(builder, Projection::Value);
                builder.wrap(Projection::Value, adapt, wv_base, adapter_rng)?
            };
            let wo = {
                let adapt = adapts(builder, Projection::Output);
                builder.wrap(Projection::Output, adapt, wo_base, adapter_rng)?
            };
            let ff1 = {
                let adapt = adapts(builder, Projection::MlpIn);
                builder.wrap(Projection::MlpIn, adapt, ff1_base, adapter_rng)?
            };
            let ff2 = {
                let adapt = adapts(builder, Projection::MlpOut);
                builder.wrap(Projection::MlpOut, adapt, ff2_base, adapter_rng)?
            };
            blocks.push(Block {
                ln1: LayerNorm::new(d_model),
                wq,
                wk,
                wv,
                wo,
                ln2: LayerNorm::new(d_model),
                ff1,
                ff2,
            });
        }
        Ok(MiniTransformerNet {
            d_model,
            n_heads,
            seq_len,
            vocab,
            tok_embed,
            pos_embed,
            blocks,
            final_ln: LayerNorm::new(d_model),
        })
    }

    pub fn layers(&self) -> impl Iterator<Item = &AdaptedLinear> {
        self.blocks.iter().flat_map(|b| {
            [&b.wq, &b.wk, &b.wv, &b.wo, &b.ff1, &b.ff2].into_iter()
        })
    }

    pub fn layers_mut(&mut self) -> impl Iterator<Item = &mut AdaptedLinear> {
        self.blocks.iter_mut().flat_map(|b| {
            [
                &mut b.wq, &mut b.wk, &mut b.wv, &mut b.wo, &mut b.ff1, &mut b.ff2,
            ]
            .into_iter()
        })
    }

    pub fn layer_norms(&self) -> impl Iterator<Item = &LayerNorm> {
        self.blocks
            .iter()
            .flat_map(|b| [&b.ln1, &b.ln2].into_iter())
            .chain(std::iter::once(&self.final_ln))
    }

    pub fn forward(&self, tokens: &[usize]) -> Result<(Vector, TransformerTrace), ModelError> {
        if tokens.len() != self.seq_len {
            return Err(ModelError::Config(format!(
                "expected {} tokens, got {}",
                self.seq_len,
                tokens.len()
            )));
        }
        if let Some(t) = tokens.iter().find(|t| **t >= self.vocab) {
            return Err(ModelError::Config(format!(
                "token {t} out of vocab {}",
                self.vocab
            )));
        }
        let len = self.seq_len;
        let mut x: Vec<Vector> = (0..len)
            .map(|i| {
                let mut row = Vector::from_slice(self.tok_embed.row(tokens[i]));
                row.add_scaled(1.0, &Vector::from_slice(self.pos_embed.row(i)))
                    .expect("embed dims");
                row
            })
            .collect();

        let mut block_traces = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (next, trace) = self.forward_block(block, &x)?;
            block_traces.push(trace);
            x = next;
        }

        let mut final_traces = Vec::with_capacity(len);
        let mut pooled = Vector::zeros(self.d_model);
        for xi in &x {
            let (y, t) = self.final_ln.forward(xi);
            pooled.add_scaled(1.0 / len as f64, &y).expect("dims");
            final_traces.push(t);
        }

        Ok((
            pooled.clone(),
            TransformerTrace {
                blocks: block_traces,
                final_ln: final_traces,
                features: pooled,
            },
        ))
    }

    fn forward_block(
        &self,
        block: &Block,
        x: &[Vector],
    ) -> Result<(Vec<Vector>, BlockTrace), ModelError> {
        let len = x.len();
        let heads = self.n_heads;
        let dh = self.d_model / heads;
        let scale = 1.0 / (dh as f64).sqrt();

        let mut ln1 = Vec::with_capacity(len);
        let mut xn1 = Vec::with_capacity(len);
        for xi in x {
            let (y, t) = block.ln1.forward(xi);
            ln1.push(t);
            xn1.push(y);
        }
        let q: Vec<Vector> = xn1.iter().map(|v| block.wq.forward(v)).collect::<Result<_, _>>()?;
        let k: Vec<Vector> = xn1.iter().map(|v| block.wk.forward(v)).collect::<Result<_, _>>()?;
        let v: Vec<Vector> = xn1.iter().map(|v| block.wv.forward(v)).collect::<Result<_, _>>()?;

        let mut probs = vec![vec![vec![0.0; len]; len]; heads];
        let mut ctx = vec![Vector::zeros(self.d_model); len];
        for h in 0..heads {
            let lo = h * dh;
            for i in 0..len {
                let mut scores = vec![0.0; len];
                for (j, kj) in k.iter().enumerate() {
                    let mut dot = 0.0;
                    for d in 0..dh {
                        dot += q[i].get(lo + d) * kj.get(lo + d);
                    }
                    scores[j] = dot * scale;
                }
                softmax_in_place(&mut scores);
                for (j, vj) in v.iter().enumerate() {
                    let p = scores[j];
                    for d in 0..dh {
                        let cur = ctx[i].get(lo + d);
                        ctx[i].set(lo + d, cur + p * vj.get(lo + d));
                    }
                }
                probs[h][i] = scores;
            }
        }

        let mut x_mid = Vec::with_capacity(len);
        for (xi, ci) in x.iter().zip(&ctx) {
            let o = block.wo.forward(ci)?;
            x_mid.push(xi.add(&o)?);
        }

        let mut ln2 = Vec::with_capacity(len);
        let mut xn2 = Vec::with_capacity(len);
        for xi in &x_mid {
            let (y, t) = block.ln2.forward(xi);
            ln2.push(t);
            xn2.push(y);
        }
        let mut ff_pre = Vec::with_capacity(len);
        let mut ff_act = Vec::with_capacity(len);
        let mut x_out = Vec::with_capacity(len);
        for (xi, ni) in x_mid.iter().zip(&xn2) {
            let pre = block.ff1.forward(ni)?;
            let act = Vector::from_vec(pre.data().iter().map(|v| v.max(0.0)).collect());
            let f = block.ff2.forward(&act)?;
            x_out.push(xi.add(&f)?);
            ff_pre.push(pre);
            ff_act.push(act);
        }

        Ok((
            x_out,
            BlockTrace {
                ln1,
                xn1,
                q,
                k,
                v,
                probs,
                ctx,
                ln2,
                xn2,
                ff_pre,
                ff_act,
            },
        ))
    }

    pub fn backward(
        &self,
        trace: &TransformerTrace,
        grad_features: &Vector,
        sink: &mut GradStore,
    ) -> Result<(), ModelError> {
        let len = self.seq_len;
        // Mean pooling spreads the gradient evenly; final LN per row.
        let mut g_x: Vec<Vector> = Vec::with_capacity(len);
        let mut g_pool = grad_features.clone();
        g_pool.scale_in_place(1.0 / len as f64);
        for t in &trace.final_ln {
            g_x.push(self.final_ln.backward(t, &g_pool));
        }

        for (block, bt) in self.blocks.iter().zip(&trace.blocks).rev() {
            g_x = self.backward_block(block, bt, g_x, sink)?;
        }
        Ok(())
    }

    fn backward_block(
        &self,
        block: &Block,
        t: &BlockTrace,
        g_out: Vec<Vector>,
        sink: &mut GradStore,
    ) -> Result<Vec<Vector>, ModelError> {
        let len = g_out.len();
        let heads = self.n_heads;
        let dh = self.d_model / heads;
        let scale = 1.0 / (dh as f64).sqrt();

        // Feed-forward path: x_out = x_mid + ff2(relu(ff1(ln2(x_mid)))).
        let mut g_mid: Vec<Vector> = g_out.clone();
        for i in 0..len {
            let g_act = block.ff2.backward(&t.ff_act[i], &g_out[i], sink)?;
            let g_pre = Vector::from_vec(
                t.ff_pre[i]
                    .data()
                    .iter()
                    .zip(g_act.data())
                    .map(|(z, g)| if *z > 0.0 { *g } else { 0.0 })
                    .collect(),
            );
            let g_xn2 = block.ff1.backward(&t.xn2[i], &g_pre, sink)?;
            let g_ln = block.ln2.backward(&t.ln2[i], &g_xn2);
            g_mid[i].add_scaled(1.0, &g_ln).map_err(ModelError::Linalg)?;
        }

        // Attention path: x_mid = x_in + wo(ctx).
        let mut g_in: Vec<Vector> = g_mid.clone();
        let mut g_q = vec![Vector::zeros(self.d_model); len];
        let mut g_k = vec![Vector::zeros(self.d_model); len];
        let mut g_v = vec![Vector::zeros(self.d_model); len];
        let mut g_ctx = Vec::with_capacity(len);
        for i in 0..len {
            g_ctx.push(block.wo.backward(&t.ctx[i], &g_mid[i], sink)?);
        }
        for h in 0..heads {
            let lo = h * dh;
            for i in 0..len {
                // dL/dp and softmax backward: g_s = p ⊙ (g_p − p·g_p).
                let mut g_p = vec![0.0; len];
                for (j, vj) in t.v.iter().enumerate() {
                    let mut dot = 0.0;
                    for d in 0..dh {
                        dot += g_ctx[i].get(lo + d) * vj.get(lo + d);
                    }
                    g_p[j] = dot;
                    let p = t.probs[h][i][j];
                    for d in 0..dh {
                        let cur = g_v[j].get(lo + d);
                        g_v[j].set(lo + d, cur + p * g_ctx[i].get(lo + d));
                    }
                }
                let p_row = &t.probs[h][i];
                let dot_gp: f64 = g_p.iter().zip(p_row).map(|(g, p)| g * p).sum();
                for j in 0..len {
                    let g_s = p_row[j] * (g_p[j] - dot_gp) * scale;
                    for d in 0..dh {
                        let cur_q = g_q[i].get(lo + d);
                        g_q[i].set(lo + d, cur_q + g_s * t.k[j].get(lo + d));
                        let cur_k = g_k[j].get(lo + d);
                        g_k[j].set(lo + d, cur_k + g_s * t.q[i].get(lo + d));
                    }
                }
            }
        }
        for i in 0..len {
            let mut g_xn1 = block.wq.backward(&t.xn1[i], &g_q[i], sink)?;
            g_xn1.add_scaled(1.0, &block.wk.backward(&t.xn1[i], &g_k[i], sink)?)
                .map_err(ModelError::Linalg)?;
            g_xn1.add_scaled(1.0, &block.wv.backward(&t.xn1[i], &g_v[i], sink)?)
                .map_err(ModelError::Linalg)?;
            let g_ln = block.ln1.backward(&t.ln1[i], &g_xn1);
            g_in[i].add_scaled(1.0, &g_ln).map_err(ModelError::Linalg)?;
        }
        Ok(g_in)
    }
}

fn softmax_in_place(scores: &mut [f64]) {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for s in scores.iter_mut() {
        *s = (*s - max).exp();
        sum += *s;
    }
    for s in scores.iter_mut() {
        *s /= sum;
    }
}
