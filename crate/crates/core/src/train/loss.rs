use crate::linalg::softplus;
use crate::model::{top_bottom_indices, ForwardTrace};

/// Clamp applied to the bag probability before taking logs.
pub const PROB_EPS: f64 = 1e-12;

/// Binary cross-entropy on a clamped bag probability.
pub fn bce_loss(p_bag: f64, label: u8) -> f64 {
    let p = p_bag.clamp(PROB_EPS, 1.0 - PROB_EPS);
    if label == 1 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Which optional instance-level terms participate in the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LossToggles {
    pub use_bot: bool,
    pub use_top: bool,
}

impl Default for LossToggles {
    fn default() -> Self {
        LossToggles { use_bot: true, use_top: true }
    }
}

/// Effective weights of the instance terms for one step, after warm-up and
/// toggle gating.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda_bot: f64,
    pub lambda_top: f64,
    pub r: usize,
}

impl LossWeights {
    pub fn gated(lambda1: f64, lambda2: f64, r: usize, warmup_active: bool, toggles: LossToggles) -> Self {
        let on = |enabled: bool, lambda: f64| if enabled && !warmup_active { lambda } else { 0.0 };
        LossWeights {
            lambda_bot: on(toggles.use_bot, lambda1),
            lambda_top: on(toggles.use_top, lambda2),
            r,
        }
    }

    pub fn ce_only(r: usize) -> Self {
        LossWeights { lambda_bot: 0.0, lambda_top: 0.0, r }
    }
}

/// Instance pseudo-label losses on explicit index sets. The bottom set is
/// pushed toward σ(s)=0 for every bag, the top set toward σ(s)=1 only for
/// positive bags; each is averaged over its set.
pub fn instance_losses_on(
    saliency_logits: &[f64],
    label: u8,
    top: &[usize],
    bottom: &[usize],
) -> (f64, f64) {
    let mean = |idx: &[usize], f: &dyn Fn(f64) -> f64| {
        if idx.is_empty() {
            0.0
        } else {
            idx.iter().map(|&i| f(saliency_logits[i])).sum::<f64>() / idx.len() as f64
        }
    };
    // -ln(1 - σ(s)) = softplus(s); -ln σ(s) = softplus(-s)
    let bot = mean(bottom, &softplus);
    let top = if label == 1 { mean(top, &|s| softplus(-s)) } else { 0.0 };
    (bot, top)
}

/// `(L_bot, L_top)` on the bottom-r / top-r instances of a trace, ranked by saliency logit.
pub fn instance_losses(trace: &ForwardTrace, label: u8, r: usize) -> (f64, f64) {
    let (top, bottom) = top_bottom_indices(&trace.saliency_logits, r);
    instance_losses_on(&trace.saliency_logits, label, &top, &bottom)
}

/// `L_CE + λ1 L_bot + λ2 L_top`, with the instance terms gated off during
/// warm-up or when toggled off.
pub fn total_loss(
    ce: f64,
    bot: f64,
    top: f64,
    lambda1: f64,
    lambda2: f64,
    warmup_active: bool,
    toggles: LossToggles,
) -> f64 {
    let w = LossWeights::gated(lambda1, lambda2, 1, warmup_active, toggles);
    ce + w.lambda_bot * bot + w.lambda_top * top
}

/// Loss components of one bag.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub ce: f64,
    pub bot: f64,
    pub top: f64,
}

impl LossParts {
    pub fn evaluate(trace: &ForwardTrace, label: u8, weights: &LossWeights) -> Self {
        let (top_idx, bottom_idx) = top_bottom_indices(&trace.saliency_logits, weights.r);
        Self::evaluate_on(trace, label, weights, &top_idx, &bottom_idx)
    }

    pub fn evaluate_on(
        trace: &ForwardTrace,
        label: u8,
        weights: &LossWeights,
        top: &[usize],
        bottom: &[usize],
    ) -> Self {
        let ce = bce_loss(trace.p_bag, label);
        let (bot, top) = instance_losses_on(&trace.saliency_logits, label, top, bottom);
        LossParts {
            total: ce + weights.lambda_bot * bot + weights.lambda_top * top,
            ce,
            bot,
            top,
        }
    }
}
