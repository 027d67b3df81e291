//! Training: losses, analytic gradients, Adam, warm-up gating, early stopping
//! on validation AUC, and best-of-N run selection.

mod adam;
mod backward;
mod config;
pub mod gradcheck;
mod loss;

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::eval::roc_auc;
use crate::model::{forward_with, predict_with, CasiiParams, InstanceBag};
use crate::nrl::KeyMatrix;
use crate::synthdata::{derive_seed, split};

pub use adam::{Adam, BETA1, BETA2, EPSILON};
pub use backward::{backward, backward_on};
pub use config::TrainConfig;
pub use loss::{
    bce_loss, instance_losses, instance_losses_on, total_loss, LossParts, LossToggles,
    LossWeights, PROB_EPS,
};

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub loss_total: f64,
    pub loss_ce: f64,
    pub loss_bot: f64,
    pub loss_top: f64,
    pub val_auc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
    /// Highest validation AUC over selection-eligible epochs.
    pub best_val_auc: f64,
    /// First epoch eligible for selection (epochs before it are warm-up).
    pub selection_start: usize,
}

impl TrainHistory {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,loss_total,loss_ce,loss_bot,loss_top,val_auc\n");
        for r in &self.records {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.epoch, r.loss_total, r.loss_ce, r.loss_bot, r.loss_top, r.val_auc
            );
        }
        s
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: CasiiParams,
    pub history: TrainHistory,
}

fn require_both_classes(bags: &[InstanceBag], what: &'static str) -> Result<()> {
    let pos = bags.iter().filter(|b| b.is_positive()).count();
    if pos == 0 || pos == bags.len() {
        return Err(Error::SingleClass(what));
    }
    Ok(())
}

/// Validation AUC of `params` on `bags`.
pub fn validation_auc(
    bags: &[InstanceBag],
    keys: &KeyMatrix,
    params: &CasiiParams,
    config: &TrainConfig,
) -> Result<f64> {
    let scores = bags
        .iter()
        .map(|b| predict_with(b, keys, params, config.pooling))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<u8> = bags.iter().map(|b| b.label).collect();
    roc_auc(&scores, &labels)
}

/// One forward/backward/update on a single bag.
pub fn train_step(
    bag: &InstanceBag,
    keys: &KeyMatrix,
    params: &mut CasiiParams,
    optimizer: &mut Adam,
    weights: &LossWeights,
    config: &TrainConfig,
) -> Result<LossParts> {
    let trace = forward_with(bag, keys, params, config.pooling)?;
    let (grads, loss) = backward(&trace, bag, keys, params, weights)?;
    optimizer.step(params, &grads);
    if let Some(block) = params.first_non_finite() {
        return Err(Error::NonFiniteGradient(block));
    }
    Ok(loss)
}

/// Trains on pre-split data with one optimizer step per bag, keeping the
/// parameters of the best validation epoch.
pub fn train_split(
    train: &[InstanceBag],
    val: &[InstanceBag],
    keys: &KeyMatrix,
    config: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    config.validate()?;
    require_both_classes(train, "training split")?;
    require_both_classes(val, "validation split")?;
    if let Some(b) = train.iter().chain(val).find(|b| b.dim() != keys.dim()) {
        return Err(Error::Shape(format!(
            "bag {} has dimension {} but keys have {}",
            b.id,
            b.dim(),
            keys.dim()
        )));
    }

    let mut params = CasiiParams::init(keys.dim(), config.latent_dim, keys.tau(), seed)?;
    let mut optimizer = Adam::new(&params, config.learning_rate, config.weight_decay);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x5348_5546));
    let mut order: Vec<usize> = (0..train.len()).collect();

    let selection_start = config.selection_start();
    let mut records = Vec::new();
    let mut best: Option<(usize, f64, CasiiParams)> = None;
    let mut stale = 0usize;

    for epoch in 1..=config.max_epochs {
        let weights = config.loss_weights(epoch);
        order.shuffle(&mut rng);
        let mut sum = LossParts::default();
        for &i in &order {
            let l = train_step(&train[i], keys, &mut params, &mut optimizer, &weights, config)?;
            sum.total += l.total;
            sum.ce += l.ce;
            sum.bot += l.bot;
            sum.top += l.top;
        }
        let n = train.len() as f64;
        let val_auc = validation_auc(val, keys, &params, config)?;
        records.push(EpochRecord {
            epoch,
            loss_total: sum.total / n,
            loss_ce: sum.ce / n,
            loss_bot: sum.bot / n,
            loss_top: sum.top / n,
            val_auc,
        });

        if epoch < selection_start {
            continue;
        }
        match &best {
            Some((_, best_auc, _)) if val_auc <= *best_auc => {
                stale += 1;
                if stale > config.patience {
                    break;
                }
            }
            _ => {
                best = Some((epoch, val_auc, params.clone()));
                stale = 0;
            }
        }
    }

    let (best_epoch, best_val_auc, params) = best.expect("at least one eligible epoch");
    Ok(TrainOutcome {
        params,
        history: TrainHistory { records, best_epoch, best_val_auc, selection_start },
    })
}

/// Seeded 9:1-style split of `bags`, then [`train_split`].
pub fn train(bags: &[InstanceBag], keys: &KeyMatrix, config: &TrainConfig) -> Result<TrainOutcome> {
    run_once(bags, keys, config, 0)
}

/// Seed used by run `run` of a multi-run selection.
pub fn run_seed(base: u64, run: usize) -> u64 {
    if run == 0 {
        base
    } else {
        derive_seed(base, 0x52_554E_0000 + run as u64)
    }
}

fn run_once(bags: &[InstanceBag], keys: &KeyMatrix, config: &TrainConfig, run: usize) -> Result<TrainOutcome> {
    config.validate()?;
    let seed = run_seed(config.seed, run);
    let (tr, val) = split(bags, config.val_ratio, seed)?;
    train_split(&tr, &val, keys, config, seed)
}

#[derive(Debug, Clone)]
pub struct MultiRunOutcome {
    /// Index of the selected run.
    pub selected: usize,
    pub params: CasiiParams,
    /// One outcome per run, in run order.
    pub runs: Vec<TrainOutcome>,
}

impl MultiRunOutcome {
    pub fn val_aucs(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.history.best_val_auc).collect()
    }
}

/// Trains `config.runs` independent models with derived seeds and re-drawn
/// splits, returning the one with the highest validation AUC (ties to the
/// lowest run index).
pub fn multi_run_select(
    bags: &[InstanceBag],
    keys: &KeyMatrix,
    config: &TrainConfig,
) -> Result<MultiRunOutcome> {
    config.validate()?;
    let runs: Vec<TrainOutcome> = if config.parallel {
        (0..config.runs)
            .into_par_iter()
            .map(|r| run_once(bags, keys, config, r))
            .collect::<Result<_>>()?
    } else {
        (0..config.runs).map(|r| run_once(bags, keys, config, r)).collect::<Result<_>>()?
    };
    let mut selected = 0;
    for (i, r) in runs.iter().enumerate() {
        if r.history.best_val_auc > runs[selected].history.best_val_auc {
            selected = i;
        }
    }
    Ok(MultiRunOutcome { selected, params: runs[selected].params.clone(), runs })
}
