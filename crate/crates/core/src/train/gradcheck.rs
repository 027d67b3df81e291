//! Central finite-difference check of the analytic gradients.
//!
//! The numeric side only runs the forward pass and the loss; the top/bottom
//! sets are frozen from the unperturbed trace, matching the backward pass.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{forward, top_bottom_indices, CasiiParams, InstanceBag, BLOCK_NAMES};
use crate::nrl::{KeyMatrix, KeyProvenance};

use super::backward::backward_on;
use super::loss::{LossParts, LossWeights};

pub const DEFAULT_STEP: f64 = 1e-6;
pub const DEFAULT_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GradDims {
    pub d: usize,
    pub d_h: usize,
    pub tau: usize,
    pub n: usize,
}

impl Default for GradDims {
    fn default() -> Self {
        GradDims { d: 6, d_h: 4, tau: 5, n: 7 }
    }
}

/// Max error per parameter block, as `‖analytic − numeric‖∞ / ‖numeric‖∞`
/// (absolute when the block's numeric gradient vanishes).
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub block_errors: [f64; 10],
}

impl GradCheckReport {
    pub fn max_error(&self) -> (&'static str, f64) {
        let (i, e) = self
            .block_errors
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |acc, (i, &e)| if e > acc.1 { (i, e) } else { acc });
        (BLOCK_NAMES[i], e)
    }

    /// Element-wise max with another report.
    pub fn merge(&mut self, other: &GradCheckReport) {
        for (a, b) in self.block_errors.iter_mut().zip(&other.block_errors) {
            *a = a.max(*b);
        }
    }

    pub fn to_table(&self) -> String {
        let mut s = String::from("block  max_rel_error\n");
        for (name, e) in BLOCK_NAMES.iter().zip(&self.block_errors) {
            s.push_str(&format!("{name:<6} {e:.3e}\n"));
        }
        s
    }
}

/// A random problem instance: bag, keys, parameters, loss weights.
pub struct GradProblem {
    pub bag: InstanceBag,
    pub keys: KeyMatrix,
    pub params: CasiiParams,
    pub weights: LossWeights,
}

pub fn random_problem(dims: GradDims, seed: u64) -> Result<GradProblem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rand_matrix = |rows: usize, cols: usize, rng: &mut ChaCha8Rng| {
        Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect())
    };
    let instances = rand_matrix(dims.d, dims.n, &mut rng)?;
    let keys = KeyMatrix::new(
        rand_matrix(dims.d, dims.tau, &mut rng)?,
        vec![KeyProvenance { bag_id: 0, selected: (0..dims.tau as u32).collect() }],
    )?;
    let label = rng.gen_range(0..2u8);
    let bag = InstanceBag::new(1, label, instances, None)?;

    let mut params = CasiiParams::init(dims.d, dims.d_h, dims.tau, rng.gen())?;
    // Non-zero biases and a wider saliency layer exercise every path.
    for b in params.b_k.iter_mut().chain(&mut params.b_q) {
        *b = rng.gen_range(-0.5..0.5);
    }
    for b in &mut params.b_v {
        *b = rng.gen_range(0.0..0.5);
    }
    for w in &mut params.w_s {
        *w *= 3.0;
    }
    params.b_s = rng.gen_range(-0.5..0.5);
    params.b_c = rng.gen_range(-0.5..0.5);

    let weights = LossWeights {
        lambda_bot: rng.gen_range(0.5..1.5),
        lambda_top: rng.gen_range(0.5..1.5),
        r: 2,
    };
    Ok(GradProblem { bag, keys, params, weights })
}

/// Analytic vs central-difference gradients on one problem. `corrupt`
/// perturbs the analytic `W_q` gradient, as a negative control.
pub fn check_problem(problem: &GradProblem, step: f64, corrupt: bool) -> Result<GradCheckReport> {
    let GradProblem { bag, keys, params, weights } = problem;
    let trace = forward(bag, keys, params)?;
    let (top, bottom) = top_bottom_indices(&trace.saliency_logits, weights.r);
    let (mut analytic, _) = backward_on(&trace, bag, keys, params, weights, &top, &bottom)?;
    if corrupt {
        analytic.w_q.data_mut()[0] += 1e-2 * (1.0 + analytic.w_q.data()[0].abs());
    }

    let loss_at = |p: &CasiiParams| -> Result<f64> {
        let t = forward(bag, keys, p)?;
        Ok(LossParts::evaluate_on(&t, bag.label, weights, &top, &bottom).total)
    };

    let mut block_errors = [0.0; 10];
    let mut probe = params.clone();
    for b in 0..10 {
        let len = params.blocks()[b].len();
        let mut max_diff: f64 = 0.0;
        let mut max_numeric: f64 = 0.0;
        for i in 0..len {
            let original = params.blocks()[b][i];
            probe.blocks_mut()[b][i] = original + step;
            let plus = loss_at(&probe)?;
            probe.blocks_mut()[b][i] = original - step;
            let minus = loss_at(&probe)?;
            probe.blocks_mut()[b][i] = original;
            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic.blocks()[b][i];
            max_diff = max_diff.max((a - numeric).abs());
            max_numeric = max_numeric.max(numeric.abs());
        }
        block_errors[b] = if max_numeric > 1e-7 { max_diff / max_numeric } else { max_diff };
    }
    Ok(GradCheckReport { block_errors })
}

/// Checks `seeds` random problems and returns the per-block worst case.
pub fn run_suite(dims: GradDims, seeds: &[u64], corrupt: bool) -> Result<GradCheckReport> {
    let mut report = GradCheckReport { block_errors: [0.0; 10] };
    for &seed in seeds {
        let problem = random_problem(dims, seed)?;
        report.merge(&check_problem(&problem, DEFAULT_STEP, corrupt)?);
    }
    Ok(report)
}

/// Fails with [`Error::GradCheck`] when any block exceeds `tolerance`.
pub fn enforce(report: &GradCheckReport, tolerance: f64) -> Result<()> {
    let (block, max_error) = report.max_error();
    if max_error < tolerance {
        Ok(())
    } else {
        Err(Error::GradCheck { block, max_error })
    }
}
