//! SGD/Adam over the trainable parameter registry: adapter slots in
//! layer-id order, then the head. Weight decay is decoupled.

use super::TrainConfig;
use crate::adapter::Adapter;
use crate::model::{AdapterGrad, GradStore, Model};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LrGroup {
    Adapter,
    Head,
}

#[derive(Debug, Clone)]
struct Slot {
    len: usize,
    group: LrGroup,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Slot {
    fn new(len: usize, group: LrGroup) -> Self {
        Slot {
            len,
            group,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }
}

/// Optimizer state. Slots are enumerated once at construction; the
/// total slot length is the audited trainable count.
#[derive(Debug)]
pub(crate) struct Optimizer {
    kind: OptimKind,
    head_lr: f64,
    adapter_lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    t: u64,
    slots: Vec<Slot>,
    /// layer id -> index of its first slot (adapters own two).
    layer_slot: HashMap<u32, usize>,
    head_slot: Option<usize>,
}

impl Optimizer {
    pub fn new(cfg: &TrainConfig, model: &Model) -> Self {
        let mut slots = Vec::new();
        let mut layer_slot = HashMap::new();
        for layer in model.layers() {
            match &layer.adapter {
                Adapter::None => {}
                Adapter::Lora(s) => {
                    layer_slot.insert(layer.id, slots.len());
                    slots.push(Slot::new(s.a().rows() * s.a().cols(), LrGroup::Adapter));
                    slots.push(Slot::new(s.b().rows() * s.b().cols(), LrGroup::Adapter));
                }
                Adapter::Uora(s) => {
                    layer_slot.insert(layer.id, slots.len());
                    slots.push(Slot::new(s.d_vec().len(), LrGroup::Adapter));
                    slots.push(Slot::new(s.b_vec().len(), LrGroup::Adapter));
                }
            }
        }
        let head_slot = model.head.as_ref().map(|h| {
            let idx = slots.len();
            slots.push(Slot::new(h.weight.rows() * h.weight.cols(), LrGroup::Head));
            slots.push(Slot::new(h.bias.len(), LrGroup::Head));
            idx
        });
        Optimizer {
            kind: cfg.optimizer,
            head_lr: cfg.head_lr,
            adapter_lr: cfg.adapter_lr,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps,
            weight_decay: cfg.weight_decay,
            t: 0,
            slots,
            layer_slot,
            head_slot,
        }
    }

    /// Total scalars this optimizer will ever touch.
    pub fn registered_params(&self) -> usize {
        self.slots.iter().map(|s| s.len).sum()
    }

    /// Apply one update. Returns the number of scalars touched.
    pub fn step(&mut self, model: &mut Model, grads: &GradStore) -> usize {
        self.t += 1;
        let mut touched = 0;

        // Collect (slot index, param slice, grad slice) pairs layer by
        // layer to keep borrows local.
        for layer in model.layers_mut() {
            let Some(&slot0) = self.layer_slot.get(&layer.id) else {
                continue;
            };
            let grad = &grads.layers[layer.id as usize];
            match (&mut layer.adapter, grad) {
                (Adapter::Lora(s), AdapterGrad::Lora { a, b }) => {
                    let ga = a.data().to_vec();
                    let gb = b.data().to_vec();
                    touched += self.update(slot0, s.a_mut().data_mut(), &ga);
                    touched += self.update(slot0 + 1, s.b_mut().data_mut(), &gb);
                }
                (Adapter::Uora(s), AdapterGrad::Uora { d, b }) => {
                    let gd = d.data().to_vec();
                    let gb = b.data().to_vec();
                    touched += self.update(slot0, s.d_vec_mut().data_mut(), &gd);
                    touched += self.update(slot0 + 1, s.b_vec_mut().data_mut(), &gb);
                }
                _ => {}
            }
        }
        if let (Some(slot0), Some(head)) = (self.head_slot, model.head.as_mut()) {
            if let (Some(gw), Some(gb)) = (&grads.head_w, &grads.head_b) {
                let gw = gw.data().to_vec();
                let gb = gb.data().to_vec();
                touched += self.update(slot0, head.weight.data_mut(), &gw);
                touched += self.update(slot0 + 1, head.bias.data_mut(), &gb);
            }
        }
        touched
    }

    fn update(&mut self, slot_idx: usize, params: &mut [f64], grads: &[f64]) -> usize {
        let slot = &mut self.slots[slot_idx];
        debug_assert_eq!(params.len(), slot.len);
        debug_assert_eq!(grads.len(), slot.len);
        let lr = match slot.group {
            LrGroup::Adapter => self.adapter_lr,
            LrGroup::Head => self.head_lr,
        };
        if self.weight_decay > 0.0 {
            for p in params.iter_mut() {
                *p -= lr * self.weight_decay * *p;
            }
        }
        match self.kind {
            OptimKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    *p -= lr * g;
                }
            }
            OptimKind::Adam => {
                let bc1 = 1.0 - self.beta1.powi(self.t as i32);
                let bc2 = 1.0 - self.beta2.powi(self.t as i32);
                for ((p, g), (m, v)) in params
                    .iter_mut()
                    .zip(grads)
                    .zip(slot.m.iter_mut().zip(slot.v.iter_mut()))
                {
                    *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                    *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    *p -= lr * m_hat / (v_hat.sqrt() + self.eps);
                }
            }
        }
        slot.len
    }

    /// Zero the moment estimates of `d_vec[dim]` for a layer, used when
    /// a reinit event is configured to also reset optimizer state.
    pub fn reset_d_moment(&mut self, layer_id: u32, dim: usize) {
        if let Some(&slot0) = self.layer_slot.get(&layer_id) {
            let slot = &mut self.slots[slot0];
            if dim < slot.len {
                slot.m[dim] = 0.0;
                slot.v[dim] = 0.0;
            }
        }
    }
}
