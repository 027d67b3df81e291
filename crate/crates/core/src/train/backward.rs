//! Reverse-mode gradients of the training objective through the whole
//! network. Top/bottom instance sets are constants of the backward pass.

use crate::error::{Error, Result};
use crate::linalg::{self, sigmoid, Matrix};
use crate::model::{top_bottom_indices, CasiiParams, ForwardTrace, Gradients, InstanceBag, Pooling};
use crate::nrl::KeyMatrix;

use super::loss::{LossParts, LossWeights, PROB_EPS};

/// Gradient of the objective with respect to every parameter block, using
/// the top/bottom sets ranked by the trace's saliency logits.
pub fn backward(
    trace: &ForwardTrace,
    bag: &InstanceBag,
    keys: &KeyMatrix,
    p: &CasiiParams,
    weights: &LossWeights,
) -> Result<(Gradients, LossParts)> {
    let (top, bottom) = top_bottom_indices(&trace.saliency_logits, weights.r);
    backward_on(trace, bag, keys, p, weights, &top, &bottom)
}

/// Backpropagates through the column normalization `u = x/‖x‖` and the tanh
/// that produced `x`, in place on `grad` (which enters as `dL/du`).
fn unnormalize_tanh(grad: &mut Matrix, unit: &Matrix, pre_norm: &Matrix, norms: &[f64]) {
    let cols = grad.cols();
    let mut proj = vec![0.0; cols];
    for h in 0..grad.rows() {
        for ((pj, u), g) in proj.iter_mut().zip(unit.row(h)).zip(grad.row(h)) {
            *pj += u * g;
        }
    }
    for h in 0..grad.rows() {
        let u_row = unit.row(h);
        let t_row = pre_norm.row(h);
        for (j, g) in grad.row_mut(h).iter_mut().enumerate() {
            let dx = (*g - u_row[j] * proj[j]) / norms[j];
            *g = dx * (1.0 - t_row[j] * t_row[j]);
        }
    }
}

/// `dW = X · dAᵀ` and `db = Σ_cols dA` for the layer `A = WᵀX + b`.
fn affine_grads(x: &Matrix, d_pre: &Matrix, dw: &mut Matrix, db: &mut [f64]) {
    for d in 0..x.rows() {
        let x_row = x.row(d);
        for (h, w) in dw.row_mut(d).iter_mut().enumerate() {
            *w = linalg::dot(x_row, d_pre.row(h));
        }
    }
    for (h, b) in db.iter_mut().enumerate() {
        *b = d_pre.row(h).iter().sum();
    }
}

pub fn backward_on(
    trace: &ForwardTrace,
    bag: &InstanceBag,
    keys: &KeyMatrix,
    p: &CasiiParams,
    weights: &LossWeights,
    top: &[usize],
    bottom: &[usize],
) -> Result<(Gradients, LossParts)> {
    let n = trace.len();
    let tau = p.tau();
    let d_h = p.latent_dim();
    let label = bag.label;
    let y = f64::from(label);
    let loss = LossParts::evaluate_on(trace, label, weights, top, bottom);
    let mut g = p.zeros_like();

    // Bag classifier. The clamp is flat outside [ε, 1-ε].
    let prob = trace.p_bag;
    let d_logit = if (PROB_EPS..=1.0 - PROB_EPS).contains(&prob) { prob - y } else { 0.0 };
    for (gw, z) in g.w_c.iter_mut().zip(&trace.bag_embedding) {
        *gw = d_logit * z;
    }
    g.b_c = d_logit;
    let dz: Vec<f64> = p.w_c.iter().map(|w| d_logit * w).collect();

    // z = Σ a_i v_i
    let mut d_values = Matrix::zeros(d_h, n);
    let mut d_attn = vec![0.0; n];
    for h in 0..d_h {
        let v_row = trace.values.row(h);
        let dz_h = dz[h];
        for (i, dv) in d_values.row_mut(h).iter_mut().enumerate() {
            *dv = trace.attention[i] * dz_h;
            d_attn[i] += v_row[i] * dz_h;
        }
    }

    // Softmax Jacobian, then the direct instance-loss paths.
    let mut d_sal = vec![0.0; n];
    if trace.pooling == Pooling::Saliency {
        let weighted: f64 = trace.attention.iter().zip(&d_attn).map(|(a, d)| a * d).sum();
        for i in 0..n {
            d_sal[i] = trace.attention[i] * (d_attn[i] - weighted);
        }
    }
    if weights.lambda_bot != 0.0 && !bottom.is_empty() {
        let scale = weights.lambda_bot / bottom.len() as f64;
        for &i in bottom {
            d_sal[i] += scale * sigmoid(trace.saliency_logits[i]);
        }
    }
    if weights.lambda_top != 0.0 && label == 1 && !top.is_empty() {
        let scale = weights.lambda_top / top.len() as f64;
        for &i in top {
            d_sal[i] -= scale * sigmoid(-trace.saliency_logits[i]);
        }
    }

    // s_i = W_sᵀ C_i + b_s
    g.b_s = d_sal.iter().sum();
    for (i, &ds) in d_sal.iter().enumerate() {
        if ds != 0.0 {
            linalg::axpy(ds, trace.correlation.row(i), &mut g.w_s);
        }
    }

    // C = Q̃ᵀK̃ with dC_ij = ds_i W_s[j]; rank-one structure avoids forming dC.
    // dQ̃[h][i] = ds_i (K̃ W_s)[h], dK̃[h][j] = W_s[j] (Q̃ ds)[h].
    let keys_ws: Vec<f64> =
        (0..d_h).map(|h| linalg::dot(trace.projected_keys.row(h), &p.w_s)).collect();
    let queries_ds: Vec<f64> =
        (0..d_h).map(|h| linalg::dot(trace.projected_queries.row(h), &d_sal)).collect();
    let mut d_queries = Matrix::zeros(d_h, n);
    let mut d_keys = Matrix::zeros(d_h, tau);
    for h in 0..d_h {
        for (dq, ds) in d_queries.row_mut(h).iter_mut().zip(&d_sal) {
            *dq = ds * keys_ws[h];
        }
        for (dk, ws) in d_keys.row_mut(h).iter_mut().zip(&p.w_s) {
            *dk = ws * queries_ds[h];
        }
    }

    unnormalize_tanh(
        &mut d_queries,
        &trace.projected_queries,
        &trace.pre_norm_queries,
        &trace.query_norms,
    );
    unnormalize_tanh(&mut d_keys, &trace.projected_keys, &trace.pre_norm_keys, &trace.key_norms);

    // ReLU gate on the value projection.
    for h in 0..d_h {
        let v_row = trace.values.row(h);
        for (dv, &v) in d_values.row_mut(h).iter_mut().zip(v_row) {
            if v <= 0.0 {
                *dv = 0.0;
            }
        }
    }

    affine_grads(&bag.instances, &d_queries, &mut g.w_q, &mut g.b_q);
    affine_grads(&bag.instances, &d_values, &mut g.w_v, &mut g.b_v);
    affine_grads(keys.keys(), &d_keys, &mut g.w_k, &mut g.b_k);

    if let Some(block) = g.first_non_finite() {
        return Err(Error::NonFiniteGradient(block));
    }
    Ok((g, loss))
}
