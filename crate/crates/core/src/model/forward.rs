use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::nrl::KeyMatrix;

use super::{CasiiParams, InstanceBag};

/// How instance embeddings are pooled into the bag embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Pooling {
    /// Softmax over saliency logits from the key cross-attention.
    #[default]
    Saliency,
    /// Every instance weighted `1/n`. Baseline for comparisons.
    Uniform,
}

/// Every intermediate of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// `tanh(W_kᵀK + b_k)`, `D_h x τ`, before normalization.
    pub pre_norm_keys: Matrix,
    pub key_norms: Vec<f64>,
    /// Unit-norm key columns.
    pub projected_keys: Matrix,
    /// `tanh(W_qᵀQ + b_q)`, `D_h x n`, before normalization.
    pub pre_norm_queries: Matrix,
    pub query_norms: Vec<f64>,
    pub projected_queries: Matrix,
    /// `ReLU(W_vᵀQ + b_v)`, `D_h x n`.
    pub values: Matrix,
    /// Cosine cross-attention, `n x τ`.
    pub correlation: Matrix,
    pub saliency_logits: Vec<f64>,
    pub attention: Vec<f64>,
    pub bag_embedding: Vec<f64>,
    pub bag_logit: f64,
    pub p_bag: f64,
    pub pooling: Pooling,
}

impl ForwardTrace {
    pub fn len(&self) -> usize {
        self.attention.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attention.is_empty()
    }
}

/// `act(Wᵀ X + b)` for a `D x D_h` weight and a `D x m` input.
fn affine_columns(w: &Matrix, b: &[f64], x: &Matrix, act: fn(f64) -> f64) -> Result<Matrix> {
    let mut out = w.t_matmul(x)?;
    for (h, &bias) in b.iter().enumerate() {
        for v in out.row_mut(h) {
            *v = act(*v + bias);
        }
    }
    Ok(out)
}

fn relu(x: f64) -> f64 {
    x.max(0.0)
}

fn check(m: &Matrix, stage: &'static str) -> Result<()> {
    if m.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(stage))
    }
}

fn check_dims(bag: &InstanceBag, keys: &KeyMatrix, p: &CasiiParams) -> Result<()> {
    if bag.dim() != p.input_dim() || keys.dim() != p.input_dim() {
        return Err(Error::Shape(format!(
            "bag D={}, keys D={}, model D={}",
            bag.dim(),
            keys.dim(),
            p.input_dim()
        )));
    }
    if keys.tau() != p.tau() {
        return Err(Error::Shape(format!(
            "key matrix has {} keys but the saliency layer expects {}",
            keys.tau(),
            p.tau()
        )));
    }
    if bag.is_empty() {
        return Err(Error::Empty("bag has no instances"));
    }
    Ok(())
}

/// Unit-normalized key projections, `D_h x τ`.
pub fn project_keys(keys: &KeyMatrix, p: &CasiiParams) -> Result<Matrix> {
    if keys.dim() != p.input_dim() {
        return Err(Error::Shape(format!(
            "keys D={} but model D={}",
            keys.dim(),
            p.input_dim()
        )));
    }
    let pre = affine_columns(&p.w_k, &p.b_k, keys.keys(), f64::tanh)?;
    linalg::l2_normalize_columns(&pre)
}

fn normalize(pre: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    let norms = linalg::column_norms(pre);
    let normalized = linalg::l2_normalize_columns(pre)?;
    Ok((norms, normalized))
}

pub fn forward(bag: &InstanceBag, keys: &KeyMatrix, p: &CasiiParams) -> Result<ForwardTrace> {
    forward_with(bag, keys, p, Pooling::Saliency)
}

pub fn forward_with(
    bag: &InstanceBag,
    keys: &KeyMatrix,
    p: &CasiiParams,
    pooling: Pooling,
) -> Result<ForwardTrace> {
    check_dims(bag, keys, p)?;
    let n = bag.len();

    let pre_norm_keys = affine_columns(&p.w_k, &p.b_k, keys.keys(), f64::tanh)?;
    check(&pre_norm_keys, "key projection")?;
    let (key_norms, projected_keys) = normalize(&pre_norm_keys)?;

    let pre_norm_queries = affine_columns(&p.w_q, &p.b_q, &bag.instances, f64::tanh)?;
    check(&pre_norm_queries, "query projection")?;
    let (query_norms, projected_queries) = normalize(&pre_norm_queries)?;

    let values = affine_columns(&p.w_v, &p.b_v, &bag.instances, relu)?;
    check(&values, "value projection")?;

    let correlation = projected_queries.t_matmul(&projected_keys)?;
    check(&correlation, "cross-attention")?;

    let saliency_logits: Vec<f64> =
        (0..n).map(|i| linalg::dot(correlation.row(i), &p.w_s) + p.b_s).collect();
    if saliency_logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("saliency logits"));
    }
    let attention = match pooling {
        Pooling::Saliency => linalg::softmax(&saliency_logits)?,
        Pooling::Uniform => vec![1.0 / n as f64; n],
    };

    let bag_embedding: Vec<f64> =
        (0..values.rows()).map(|h| linalg::dot(values.row(h), &attention)).collect();
    let bag_logit = linalg::dot(&bag_embedding, &p.w_c) + p.b_c;
    if !bag_logit.is_finite() {
        return Err(Error::NonFinite("bag classifier"));
    }
    let p_bag = linalg::sigmoid(bag_logit);

    Ok(ForwardTrace {
        pre_norm_keys,
        key_norms,
        projected_keys,
        pre_norm_queries,
        query_norms,
        projected_queries,
        values,
        correlation,
        saliency_logits,
        attention,
        bag_embedding,
        bag_logit,
        p_bag,
        pooling,
    })
}

/// Bag-level positive probability.
pub fn predict(bag: &InstanceBag, keys: &KeyMatrix, p: &CasiiParams) -> Result<f64> {
    Ok(forward(bag, keys, p)?.p_bag)
}

pub fn predict_with(
    bag: &InstanceBag,
    keys: &KeyMatrix,
    p: &CasiiParams,
    pooling: Pooling,
) -> Result<f64> {
    Ok(forward_with(bag, keys, p, pooling)?.p_bag)
}

/// Indices of the `r` largest and `r` smallest scores, each list computed
/// independently. `r` is clipped to the bag size and ties go to the lower
/// index. Training ranks by saliency logits, which orders instances exactly
/// like the softmax attention and stays meaningful under uniform pooling.
pub fn top_bottom_indices(scores: &[f64], r: usize) -> (Vec<usize>, Vec<usize>) {
    let r = r.min(scores.len());
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]).then(i.cmp(&j)));
    let top = order[..r].to_vec();
    order.sort_by(|&i, &j| scores[i].total_cmp(&scores[j]).then(i.cmp(&j)));
    let bottom = order[..r].to_vec();
    (top, bottom)
}
