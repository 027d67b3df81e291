//! Seeded synthetic benchmark shared by the acceptance suite and the
//! `benchmark` example.

#![allow(dead_code)]

use std::time::{Duration, Instant};

use casii::eval::{attention_localization, grouped_accuracy, roc_auc, DEFAULT_THRESHOLD};
use casii::model::{forward_with, predict_with, Pooling};
use casii::nrl::build_key_matrix;
use casii::synthdata::{generate, generate_held_out, witness_group, WitnessGroup};
use casii::train::{multi_run_select, LossToggles, MultiRunOutcome};
use casii::{CasiiParams, Dataset, InstanceBag, KeyMatrix, SynthConfig, TrainConfig};

/// First id of the held-out test bags.
pub const TEST_ID_OFFSET: u32 = 1_000_000;
pub const TEST_BAGS_PER_CLASS: usize = 100;

pub struct Benchmark {
    pub data: Dataset,
    pub test: Dataset,
    pub keys: KeyMatrix,
    pub config: TrainConfig,
}

/// Training settings used for the benchmark.
pub fn bench_config() -> TrainConfig {
    TrainConfig {
        latent_dim: 32,
        t_max: 4,
        max_epochs: 40,
        warmup_epochs: 5,
        patience: 10,
        learning_rate: 1e-3,
        runs: 5,
        parallel: true,
        ..TrainConfig::default()
    }
}

pub fn setup(synth: &SynthConfig, config: TrainConfig) -> Benchmark {
    let data = generate(synth).expect("generate");
    let test = generate_held_out(synth, TEST_BAGS_PER_CLASS, TEST_BAGS_PER_CLASS, TEST_ID_OFFSET)
        .expect("held-out");
    let keys = build_key_matrix(&data.negatives(), config.t_max, None).expect("keys");
    Benchmark { data, test, keys, config }
}

pub struct Evaluation {
    pub test_auc: f64,
    pub micro_accuracy: f64,
    pub macro_accuracy: f64,
    pub negative_accuracy: f64,
    pub selected_val_auc: f64,
    pub elapsed: Duration,
}

pub fn scores(bags: &[InstanceBag], keys: &KeyMatrix, p: &CasiiParams, pooling: Pooling) -> Vec<f64> {
    bags.iter().map(|b| predict_with(b, keys, p, pooling).expect("predict")).collect()
}

pub fn train_and_evaluate(bench: &Benchmark, pooling: Pooling, toggles: LossToggles) -> (MultiRunOutcome, Evaluation) {
    let cfg = TrainConfig { pooling, toggles, ..bench.config.clone() };
    let start = Instant::now();
    let outcome = multi_run_select(&bench.data.bags, &bench.keys, &cfg).expect("training");
    let elapsed = start.elapsed();
    let s = scores(&bench.test.bags, &bench.keys, &outcome.params, pooling);
    let test_auc = roc_auc(&s, &bench.test.labels()).expect("auc");
    let bags: Vec<&InstanceBag> = bench.test.bags.iter().collect();
    let g = grouped_accuracy(&s, &bags, DEFAULT_THRESHOLD).expect("groups");
    let eval = Evaluation {
        test_auc,
        micro_accuracy: g.get(WitnessGroup::Micro).expect("micro bags present"),
        macro_accuracy: g.get(WitnessGroup::Macro).expect("macro bags present"),
        negative_accuracy: g.get(WitnessGroup::Negative).expect("negative bags present"),
        selected_val_auc: outcome.runs[outcome.selected].history.best_val_auc,
        elapsed,
    };
    (outcome, eval)
}

/// Mean top-`fraction` attention precision and mean witness rate over the
/// macro-group test bags.
pub fn macro_localization(bench: &Benchmark, p: &CasiiParams, fraction: f64) -> (f64, f64, usize) {
    let mut precision = 0.0;
    let mut rate = 0.0;
    let mut count = 0;
    for bag in &bench.test.bags {
        if witness_group(bag).unwrap() != WitnessGroup::Macro {
            continue;
        }
        let trace = forward_with(bag, &bench.keys, p, Pooling::Saliency).unwrap();
        precision += attention_localization(&trace.attention, bag, fraction).unwrap();
        rate += bag.witness_rate().unwrap();
        count += 1;
    }
    (precision / count as f64, rate / count as f64, count)
}
