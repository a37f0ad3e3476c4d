//! Fully connected host network: frozen linear stack with ReLU between
//! layers (none after the last).

use super::{AdaptedLinear, AdapterBuilder, GradStore, ModelError, ModelSpec, Projection};
use crate::adapter::FrozenLinear;
use crate::linalg::{init_matrix, InitKind, SeededRng, Vector};

#[derive(Debug, Clone)]
pub struct MlpNet {
    pub layers: Vec<AdaptedLinear>,
}

/// Cached per-layer inputs and pre-activations.
#[derive(Debug)]
pub struct MlpTrace {
    /// Input to each layer (len = n_layers).
    inputs: Vec<Vector>,
    /// Pre-activation output of each layer.
    pre: Vec<Vector>,
    /// Final features (last pre-activation, no ReLU).
    features: Vector,
}

impl MlpTrace {
    pub fn features(&self) -> &Vector {
        &self.features
    }
}

impl MlpNet {
    pub(crate) fn build(
        widths: &[usize],
        _spec: &ModelSpec,
        base_rng: &mut SeededRng,
        adapter_rng: &mut SeededRng,
        builder: &mut AdapterBuilder,
    ) -> Result<Self, ModelError> {
        let n = widths.len() - 1;
        let mut layers = Vec::with_capacity(n);
        for i in 0..n {
            let (d_in, d_out) = (widths[i], widths[i + 1]);
            let weight = init_matrix(InitKind::kaiming(), d_out, d_in, base_rng);
            let base = FrozenLinear::new(weight, None)?;
            // "mlp_in" names the first layer, "mlp_out" the last; a
            // single-layer net answers to both. Interior layers are
            // never adapted.
            let role = if i == 0 {
                Projection::MlpIn
            } else {
                Projection::MlpOut
            };
            let adapt = (i == 0 && builder.adapts(Projection::MlpIn))
                || (i == n - 1 && builder.adapts(Projection::MlpOut));
            layers.push(builder.wrap(role, adapt, base, adapter_rng)?);
        }
        Ok(MlpNet { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].base.d_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().base.d_out()
    }

    pub fn forward(&self, x: &Vector) -> Result<(Vector, MlpTrace), ModelError> {
        let n = self.layers.len();
        let mut inputs = Vec::with_capacity(n);
        let mut pre = Vec::with_capacity(n);
        let mut cur = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            inputs.push(cur.clone());
            let z = layer.forward(&cur)?;
            pre.push(z.clone());
            cur = if i < n - 1 { relu(&z) } else { z };
        }
        let features = cur.clone();
        Ok((
            features.clone(),
            MlpTrace {
                inputs,
                pre,
                features,
            },
        ))
    }

    pub fn backward(
        &self,
        trace: &MlpTrace,
        grad_features: &Vector,
        sink: &mut GradStore,
    ) -> Result<(), ModelError> {
        let n = self.layers.len();
        let mut g = grad_features.clone();
        for i in (0..n).rev() {
            let gz = if i < n - 1 {
                relu_backward(&trace.pre[i], &g)
            } else {
                g
            };
            g = self.layers[i].backward(&trace.inputs[i], &gz, sink)?;
        }
        Ok(())
    }
}

fn relu(v: &Vector) -> Vector {
    Vector::from_vec(v.data().iter().map(|x| x.max(0.0)).collect())
}

fn relu_backward(pre: &Vector, g: &Vector) -> Vector {
    Vector::from_vec(
        pre.data()
            .iter()
            .zip(g.data())
            .map(|(z, gi)| if *z > 0.0 { *gi } else { 0.0 })
            .collect(),
    )
}
