//! Exact reverse-mode gradients through the cached forward pass.
//!
//! Callers express a loss by its gradient with respect to the per-step
//! logits (and optionally per-step critic values); this module runs
//! backpropagation through time for the shared trunk. Critic-value
//! gradients flow only into the critic head, which regresses on the cached
//! hidden features.

use ndarray::{Array1, Array2, ArrayView1};

use super::forward::SeqForward;
use super::params::{Gradients, PolicyParams};

/// Accumulate gradients for one sequence given upstream `dlogits` [T, V]
/// and optional `dvalues` [T].
pub fn backward_seq(
    params: &PolicyParams,
    fwd: &SeqForward,
    dlogits: &Array2<f64>,
    dvalues: Option<&Array1<f64>>,
    grads: &mut Gradients,
) {
    let layers = params.dims.layers;
    let steps = fwd.steps.len();
    assert_eq!(dlogits.nrows(), steps, "dlogits row count");
    let mut dh_carry: Vec<Array1<f64>> = vec![Array1::zeros(params.dims.hidden); layers];

    for t in (0..steps).rev() {
        let trace = &fwd.steps[t];
        let h_top = trace.h.last().expect("at least one layer");
        let dl = dlogits.row(t);
        let row_active = dl.iter().any(|&x| x != 0.0);
        if row_active {
            for (mut wrow, &g) in grads.tensors.head_w.outer_iter_mut().zip(dl.iter()) {
                if g != 0.0 {
                    wrow.scaled_add(g, h_top);
                }
            }
            grads.tensors.head_b.scaled_add(1.0, &dl);
        }
        if let Some(dv) = dvalues {
            let g = dv[t];
            if g != 0.0 {
                let critic = grads
                    .tensors
                    .critic
                    .as_mut()
                    .expect("critic gradients require a critic head");
                critic.w.scaled_add(g, h_top);
                critic.b[0] += g;
            }
        }

        // descend through the layers at step t
        let mut d_from_above: Array1<f64> = if row_active {
            params.head_w.t().dot(&dl)
        } else {
            Array1::zeros(params.dims.hidden)
        };
        for l in (0..layers).rev() {
            let dh = &dh_carry[l] + &d_from_above;
            let (dx, dh_prev) = backward_cell(params, grads, fwd, l, t, &dh.view());
            dh_carry[l] = dh_prev;
            d_from_above = dx;
        }
        // d_from_above is now the embedding-row gradient
        grads
            .tensors
            .embedding
            .row_mut(fwd.ids[t] as usize)
            .scaled_add(1.0, &d_from_above);
    }
}

/// One GRU cell backward: returns (dx, dh_prev).
fn backward_cell(
    params: &PolicyParams,
    grads: &mut Gradients,
    fwd: &SeqForward,
    layer: usize,
    t: usize,
    dh: &ArrayView1<f64>,
) -> (Array1<f64>, Array1<f64>) {
    let p = &params.gru[layer];
    let g = &mut grads.tensors.gru[layer];
    let trace = &fwd.steps[t];
    let z = &trace.z[layer];
    let r = &trace.r[layer];
    let n = &trace.n[layer];
    let h_prev = &trace.h_prev[layer];
    let x: Array1<f64> = if layer == 0 {
        params.embedding.row(fwd.ids[t] as usize).to_owned()
    } else {
        trace.h[layer - 1].clone()
    };

    // h = (1 - z) * n + z * h_prev
    let dz = dh * &(h_prev - n);
    let dn = dh * &(1.0 - z);
    let mut dh_prev = dh * z;

    // n = tanh(W_n x + U_n (r * h_prev) + b_n)
    let da_n = &dn * &(1.0 - n * n);
    outer_add(&mut g.w_cand, &da_n.view(), &x.view());
    let gated = r * h_prev;
    outer_add(&mut g.u_cand, &da_n.view(), &gated.view());
    g.b_cand.scaled_add(1.0, &da_n);
    let d_gated = p.u_cand.t().dot(&da_n);
    let dr = &d_gated * h_prev;
    dh_prev = dh_prev + &d_gated * r;

    // z = sigmoid(W_z x + U_z h_prev + b_z)
    let da_z = &dz * z * &(1.0 - z);
    outer_add(&mut g.w_update, &da_z.view(), &x.view());
    outer_add(&mut g.u_update, &da_z.view(), &h_prev.view());
    g.b_update.scaled_add(1.0, &da_z);
    dh_prev = dh_prev + p.u_update.t().dot(&da_z);

    // r = sigmoid(W_r x + U_r h_prev + b_r)
    let da_r = &dr * r * &(1.0 - r);
    outer_add(&mut g.w_reset, &da_r.view(), &x.view());
    outer_add(&mut g.u_reset, &da_r.view(), &h_prev.view());
    g.b_reset.scaled_add(1.0, &da_r);
    dh_prev = dh_prev + p.u_reset.t().dot(&da_r);

    let dx = p.w_update.t().dot(&da_z) + p.w_reset.t().dot(&da_r) + p.w_cand.t().dot(&da_n);
    (dx, dh_prev)
}

fn outer_add(acc: &mut ndarray::Array2<f64>, col: &ArrayView1<f64>, row: &ArrayView1<f64>) {
    for (mut acc_row, &c) in acc.outer_iter_mut().zip(col.iter()) {
        if c != 0.0 {
            acc_row.scaled_add(c, row);
        }
    }
}
