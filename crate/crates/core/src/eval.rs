//! Bag-level metrics, witness-group accuracy and attention localization.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{ForwardTrace, InstanceBag};
use crate::synthdata::{witness_group, WitnessGroup};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Mann–Whitney AUC: probability that a random positive outscores a random
/// negative, ties counting one half. Uses midranks, `O(n log n)`.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass("roc_auc"));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("roc_auc scores"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[i].total_cmp(&scores[j]));
    let mut pos_rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // Ranks start..end (0-based) share the midrank.
        let midrank = (start + end + 1) as f64 / 2.0;
        let positives = order[start..end].iter().filter(|&&i| labels[i] == 1).count();
        pos_rank_sum += midrank * positives as f64;
        start = end;
    }
    let u = pos_rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    /// `None` when only one class is present.
    pub auc: Option<f64>,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    pub threshold: f64,
    /// Set when `tp + fp == 0` and precision is reported as 0.
    pub precision_undefined: bool,
    /// Set when `tp + fn == 0` and recall is reported as 0.
    pub recall_undefined: bool,
}

impl MetricsReport {
    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / (self.tp + self.fp + self.tn + self.fn_) as f64
    }

    pub fn to_table(&self) -> String {
        let auc = self.auc.map_or("n/a".to_string(), |a| format!("{a:.4}"));
        let mut s = String::new();
        let _ = writeln!(s, "{:<10} {:>8}", "metric", "value");
        let _ = writeln!(s, "{:<10} {:>8}", "auc", auc);
        let flag = |undef: bool| if undef { " *" } else { "" };
        let _ = writeln!(s, "{:<10} {:>8.4}", "f1", self.f1);
        let _ = writeln!(s, "{:<10} {:>8.4}{}", "precision", self.precision, flag(self.precision_undefined));
        let _ = writeln!(s, "{:<10} {:>8.4}{}", "recall", self.recall, flag(self.recall_undefined));
        let _ = writeln!(s, "{:<10} {:>8.4}", "accuracy", self.accuracy());
        let _ = writeln!(
            s,
            "tp={} fp={} tn={} fn={} threshold={}",
            self.tp, self.fp, self.tn, self.fn_, self.threshold
        );
        if self.precision_undefined || self.recall_undefined {
            s.push_str("* undefined (zero denominator), reported as 0\n");
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let auc = self.auc.map_or(String::new(), |a| a.to_string());
        format!(
            "auc,f1,precision,recall,tp,fp,tn,fn,threshold\n{auc},{},{},{},{},{},{},{},{}\n",
            self.f1, self.precision, self.recall, self.tp, self.fp, self.tn, self.fn_, self.threshold
        )
    }
}

pub fn classification_metrics(scores: &[f64], labels: &[u8], threshold: f64) -> Result<MetricsReport> {
    if scores.is_empty() {
        return Err(Error::Empty("classification_metrics needs at least one score"));
    }
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= threshold, l == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    Ok(report_from_counts(tp, fp, tn, fn_, threshold, roc_auc(scores, labels).ok()))
}

pub fn report_from_counts(
    tp: usize,
    fp: usize,
    tn: usize,
    fn_: usize,
    threshold: f64,
    auc: Option<f64>,
) -> MetricsReport {
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    MetricsReport {
        auc,
        f1,
        precision,
        recall,
        tp,
        fp,
        tn,
        fn_,
        threshold,
        precision_undefined: tp + fp == 0,
        recall_undefined: tp + fn_ == 0,
    }
}

/// Accuracy within one witness group; `None` when the group is empty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupStat {
    pub correct: usize,
    pub total: usize,
}

impl GroupStat {
    pub fn accuracy(&self) -> Option<f64> {
        (self.total > 0).then(|| self.correct as f64 / self.total as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupedAccuracy {
    pub negative: GroupStat,
    pub macro_: GroupStat,
    pub micro: GroupStat,
}

impl GroupedAccuracy {
    pub fn get(&self, group: WitnessGroup) -> Option<f64> {
        match group {
            WitnessGroup::Negative => self.negative.accuracy(),
            WitnessGroup::Macro => self.macro_.accuracy(),
            WitnessGroup::Micro => self.micro.accuracy(),
        }
    }

    pub fn to_table(&self) -> String {
        let mut s = format!("{:<10} {:>6} {:>9}\n", "group", "bags", "accuracy");
        for (g, stat) in [
            (WitnessGroup::Negative, self.negative),
            (WitnessGroup::Macro, self.macro_),
            (WitnessGroup::Micro, self.micro),
        ] {
            let acc = stat.accuracy().map_or("absent".to_string(), |a| format!("{a:.4}"));
            let _ = writeln!(s, "{:<10} {:>6} {:>9}", g.name(), stat.total, acc);
        }
        s
    }
}

pub fn grouped_accuracy(
    predictions: &[f64],
    bags: &[&InstanceBag],
    threshold: f64,
) -> Result<GroupedAccuracy> {
    if predictions.len() != bags.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} bags",
            predictions.len(),
            bags.len()
        )));
    }
    let empty = GroupStat { correct: 0, total: 0 };
    let mut out = GroupedAccuracy { negative: empty, macro_: empty, micro: empty };
    for (&p, bag) in predictions.iter().zip(bags) {
        let stat = match witness_group(bag)? {
            WitnessGroup::Negative => &mut out.negative,
            WitnessGroup::Macro => &mut out.macro_,
            WitnessGroup::Micro => &mut out.micro,
        };
        stat.total += 1;
        if u8::from(p >= threshold) == bag.label {
            stat.correct += 1;
        }
    }
    Ok(out)
}

/// Instances ordered by attention, highest first; ties by lower index.
fn attention_order(attention: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..attention.len()).collect();
    order.sort_by(|&i, &j| attention[j].total_cmp(&attention[i]).then(i.cmp(&j)));
    order
}

/// Share of true positives among the `ceil(fraction * n)` highest-attention
/// instances of a positive bag.
pub fn attention_localization(attention: &[f64], bag: &InstanceBag, fraction: f64) -> Result<f64> {
    if !bag.is_positive() {
        return Err(Error::InvalidArgument(format!(
            "attention localization needs a positive bag (bag {} is negative)",
            bag.id
        )));
    }
    let labels = bag.instance_labels.as_ref().ok_or(Error::MissingInstanceLabels(bag.id))?;
    if attention.len() != labels.len() {
        return Err(Error::Shape("attention length differs from bag size".into()));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument("fraction must lie in (0, 1]".into()));
    }
    let k = ((fraction * labels.len() as f64 - 1e-9).ceil() as usize).clamp(1, labels.len());
    let hits = attention_order(attention)[..k].iter().filter(|&&i| labels[i] == 1).count();
    Ok(hits as f64 / k as f64)
}

/// CSV rows `bag_id,instance_index,saliency_logit,attention_weight,instance_label`
/// sorted by attention, highest first.
pub fn attention_csv(trace: &ForwardTrace, bag: &InstanceBag) -> String {
    let mut s = String::from("bag_id,instance_index,saliency_logit,attention_weight,instance_label\n");
    for i in attention_order(&trace.attention) {
        let label = bag.instance_labels.as_ref().map_or(-1, |l| i32::from(l[i]));
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            bag.id, i, trace.saliency_logits[i], trace.attention[i], label
        );
    }
    s
}

pub fn export_attention(trace: &ForwardTrace, bag: &InstanceBag, path: &Path) -> Result<()> {
    std::fs::write(path, attention_csv(trace, bag)).map_err(|e| Error::io(path, e))
}
