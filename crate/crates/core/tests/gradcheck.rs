//! Analytic adapter gradients vs. a central finite-difference oracle.
//!
//! The scalar loss is a fixed random linear functional of the layer
//! output, `L = c . forward(x)`, so the analytic upstream gradient is
//! exactly `c` and the finite-difference probe sees the full forward
//! path with no extra nonlinearity.

use uora_core::adapter::{
    backward_lora, backward_uora, forward_lora, forward_uora, FrozenLinear, LoraState, UoraState,
};
use uora_core::linalg::{init_matrix, streams, InitKind, SeededRng, Vector};

const FD_STEP: f64 = 1e-5;
const REL_TOL: f64 = 1e-6;
/// Components below this magnitude are compared absolutely (at 1e-9):
/// central differences with h=1e-5 carry ~1e-11 of rounding noise, so a
/// relative test on near-zero components would only measure that noise.
const ABS_FLOOR: f64 = 1e-4;

fn random_vec(len: usize, rng: &mut SeededRng) -> Vector {
    Vector::from_vec((0..len).map(|_| rng.uniform(1.0)).collect())
}

fn check_component(analytic: f64, numeric: f64, what: &str) {
    let scale = analytic.abs().max(numeric.abs());
    if scale <= ABS_FLOOR {
        assert!(
            (analytic - numeric).abs() <= 1e-9,
            "{what}: analytic {analytic} vs numeric {numeric} (absolute)"
        );
    } else {
        let rel = (analytic - numeric).abs() / scale;
        assert!(
            rel <= REL_TOL,
            "{what}: analytic {analytic} vs numeric {numeric} rel {rel}"
        );
    }
}

#[test]
fn uora_gradients_match_finite_differences() {
    let mut rng = SeededRng::new(101, streams::ADAPTER_INIT);
    for case in 0..30 {
        let d_out = 2 + rng.index(31);
        let d_in = 2 + rng.index(31);
        let r = 1 + rng.index(8.min(d_out.min(d_in)));
        let w = init_matrix(InitKind::kaiming(), d_out, d_in, &mut rng);
        let layer = FrozenLinear::new(w, None).unwrap();
        let mut s = UoraState::new(d_out, d_in, r, InitKind::orthogonal(), &mut rng).unwrap();
        for v in s.d_vec_mut().data_mut() {
            *v = rng.uniform(1.0);
        }
        for v in s.b_vec_mut().data_mut() {
            *v = rng.uniform(1.0);
        }
        let x = random_vec(d_in, &mut rng);
        let c = random_vec(d_out, &mut rng);

        let grads = backward_uora(&layer, &s, &x, &c).unwrap();
        let loss = |s: &UoraState, x: &Vector| {
            forward_uora(&layer, s, x).unwrap().dot(&c).unwrap()
        };

        for i in 0..r {
            let orig = s.d_vec().get(i);
            s.d_vec_mut().set(i, orig + FD_STEP);
            let up = loss(&s, &x);
            s.d_vec_mut().set(i, orig - FD_STEP);
            let down = loss(&s, &x);
            s.d_vec_mut().set(i, orig);
            let numeric = (up - down) / (2.0 * FD_STEP);
            check_component(grads.d.get(i), numeric, &format!("case {case} d[{i}]"));
        }
        for i in 0..d_out {
            let orig = s.b_vec().get(i);
            s.b_vec_mut().set(i, orig + FD_STEP);
            let up = loss(&s, &x);
            s.b_vec_mut().set(i, orig - FD_STEP);
            let down = loss(&s, &x);
            s.b_vec_mut().set(i, orig);
            let numeric = (up - down) / (2.0 * FD_STEP);
            check_component(grads.b.get(i), numeric, &format!("case {case} b[{i}]"));
        }
        // Input gradient through both the frozen and the adapter path.
        let mut x_pert = x.clone();
        for j in 0..d_in {
            let orig = x_pert.get(j);
            x_pert.set(j, orig + FD_STEP);
            let up = loss(&s, &x_pert);
            x_pert.set(j, orig - FD_STEP);
            let down = loss(&s, &x_pert);
            x_pert.set(j, orig);
            let numeric = (up - down) / (2.0 * FD_STEP);
            check_component(grads.x.get(j), numeric, &format!("case {case} x[{j}]"));
        }
    }
}

#[test]
fn lora_gradients_match_finite_differences() {
    let mut rng = SeededRng::new(202, streams::ADAPTER_INIT);
    for case in 0..25 {
        let d_out = 2 + rng.index(31);
        let d_in = 2 + rng.index(31);
        let r = 1 + rng.index(8.min(d_out.min(d_in)));
        let w = init_matrix(InitKind::kaiming(), d_out, d_in, &mut rng);
        let layer = FrozenLinear::new(w, None).unwrap();
        let mut s = LoraState::new(d_out, d_in, r, InitKind::kaiming(), &mut rng).unwrap();
        for v in s.b_mut().data_mut() {
            *v = rng.uniform(0.7);
        }
        let x = random_vec(d_in, &mut rng);
        let c = random_vec(d_out, &mut rng);

        let grads = backward_lora(&layer, &s, &x, &c).unwrap();
        let loss = |s: &LoraState, x: &Vector| {
            forward_lora(&layer, s, x).unwrap().dot(&c).unwrap()
        };

        for row in 0..r {
            for col in 0..d_in {
                let orig = s.a().get(row, col);
                s.a_mut().set(row, col, orig + FD_STEP);
                let up = loss(&s, &x);
                s.a_mut().set(row, col, orig - FD_STEP);
                let down = loss(&s, &x);
                s.a_mut().set(row, col, orig);
                let numeric = (up - down) / (2.0 * FD_STEP);
                check_component(
                    grads.a.get(row, col),
                    numeric,
                    &format!("case {case} A[{row},{col}]"),
                );
            }
        }
        for row in 0..d_out {
            for col in 0..r {
                let orig = s.b().get(row, col);
                s.b_mut().set(row, col, orig + FD_STEP);
                let up = loss(&s, &x);
                s.b_mut().set(row, col, orig - FD_STEP);
                let down = loss(&s, &x);
                s.b_mut().set(row, col, orig);
                let numeric = (up - down) / (2.0 * FD_STEP);
                check_component(
                    grads.b.get(row, col),
                    numeric,
                    &format!("case {case} B[{row},{col}]"),
                );
            }
        }
        let mut x_pert = x.clone();
        for j in 0..d_in {
            let orig = x_pert.get(j);
            x_pert.set(j, orig + FD_STEP);
            let up = loss(&s, &x_pert);
            x_pert.set(j, orig - FD_STEP);
            let down = loss(&s, &x_pert);
            x_pert.set(j, orig);
            let numeric = (up - down) / (2.0 * FD_STEP);
            check_component(grads.x.get(j), numeric, &format!("case {case} x[{j}]"));
        }
    }
}

#[test]
fn merge_forward_agrees_with_adapter_forward() {
    let mut rng = SeededRng::new(303, streams::ADAPTER_INIT);
    let (d_out, d_in, r) = (12, 10, 4);
    let w = init_matrix(InitKind::kaiming(), d_out, d_in, &mut rng);
    let layer = FrozenLinear::new(w, None).unwrap();

    let mut uora = UoraState::new(d_out, d_in, r, InitKind::orthogonal(), &mut rng).unwrap();
    for v in uora.d_vec_mut().data_mut() {
        *v = rng.uniform(1.0);
    }
    for v in uora.b_vec_mut().data_mut() {
        *v = rng.uniform(1.0);
    }
    let merged_u = uora_core::adapter::merge_uora(&layer, &uora).unwrap();

    let mut lora = LoraState::new(d_out, d_in, r, InitKind::kaiming(), &mut rng).unwrap();
    for v in lora.b_mut().data_mut() {
        *v = rng.uniform(1.0);
    }
    let merged_l = uora_core::adapter::merge_lora(&layer, &lora).unwrap();

    for _ in 0..100 {
        let x = random_vec(d_in, &mut rng);
        let via_adapter = forward_uora(&layer, &uora, &x).unwrap();
        let via_merged = merged_u.forward(&x).unwrap();
        assert!(via_adapter.max_abs_diff(&via_merged) <= 1e-9);

        let via_adapter = forward_lora(&layer, &lora, &x).unwrap();
        let via_merged = merged_l.forward(&x).unwrap();
        assert!(via_adapter.max_abs_diff(&via_merged) <= 1e-9);
    }
}
