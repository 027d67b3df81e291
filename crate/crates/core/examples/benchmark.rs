//! Runs the seeded synthetic benchmark and prints test metrics for the
//! saliency model, the mean-pooling baseline and the loss ablation.

#[path = "../tests/common/experiment.rs"]
mod experiment;

use casii::train::LossToggles;
use casii::{Pooling, SynthConfig};
use experiment::*;

fn main() {
    let bench = setup(&SynthConfig::default(), bench_config());
    println!("tau={} train bags={} test bags={}", bench.keys.tau(), bench.data.len(), bench.test.len());
    let full = LossToggles { use_bot: true, use_top: true };
    let (outcome, e) = train_and_evaluate(&bench, Pooling::Saliency, full);
    report("saliency", &e);
    for (i, r) in outcome.runs.iter().enumerate() {
        println!("  run {i}: best val {:.4} at epoch {} of {}", r.history.best_val_auc, r.history.best_epoch, r.history.records.len());
    }
    let (prec, rate, n) = macro_localization(&bench, &outcome.params, 0.1);
    println!("  macro localization: precision {prec:.4} vs witness rate {rate:.4} over {n} bags");

    let (_, b) = train_and_evaluate(&bench, Pooling::Uniform, full);
    report("mean-pool", &b);

    for (bot, top) in [(false, false), (true, false), (false, true)] {
        let (_, a) = train_and_evaluate(&bench, Pooling::Saliency, LossToggles { use_bot: bot, use_top: top });
        report(&format!("bot={bot} top={top}"), &a);
    }
}

fn report(name: &str, e: &Evaluation) {
    println!(
        "{name}: test AUC {:.4} val AUC {:.4} micro {:.3} macro {:.3} negative {:.3} ({:.1}s)",
        e.test_auc,
        e.selected_val_auc,
        e.micro_accuracy,
        e.macro_accuracy,
        e.negative_accuracy,
        e.elapsed.as_secs_f64()
    );
}
