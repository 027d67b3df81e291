//! Synthetic embedding bags standing in for slide-level patch features.
//!
//! Normal instances come from a mixture of Gaussian modes centred on the unit
//! sphere; each bag draws its own mode proportions. Tumor instances are
//! normal-tissue draws displaced by `tumor_shift` along a fixed tumor
//! direction with extra isotropic noise, so a small shift overlaps the normal
//! modes and a zero shift with zero noise is indistinguishable from normal.

mod io;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;

use crate::config::{parse_range, parse_value};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::InstanceBag;

pub use io::{load_dataset, save_dataset};

/// Witness-rate threshold below which a positive bag counts as micro.
pub const MICRO_THRESHOLD: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub dim: usize,
    pub n_negative_bags: usize,
    pub n_positive_bags: usize,
    /// Inclusive range of instances per bag.
    pub instances_per_bag: (usize, usize),
    /// Range of the positive-instance fraction; sampled log-uniformly.
    pub witness_rate: (f64, f64),
    pub n_normal_clusters: usize,
    /// Expected norm of the within-mode noise.
    pub cluster_spread: f64,
    /// Displacement of tumor instances along the tumor direction.
    pub tumor_shift: f64,
    /// Expected norm of the extra tumor noise.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            dim: 64,
            n_negative_bags: 100,
            n_positive_bags: 100,
            instances_per_bag: (200, 500),
            witness_rate: (0.002, 0.3),
            n_normal_clusters: 4,
            cluster_spread: 0.5,
            tumor_shift: 0.5,
            noise_sigma: 0.1,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        let (lo, hi) = self.witness_rate;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return bad(format!("witness_rate range ({lo}, {hi}) must satisfy 0 < lo <= hi <= 1"));
        }
        let (nlo, nhi) = self.instances_per_bag;
        if nlo == 0 || nlo > nhi {
            return bad(format!("instances_per_bag range ({nlo}, {nhi}) is invalid"));
        }
        if self.dim == 0 || self.n_normal_clusters == 0 {
            return bad("dim and n_normal_clusters must be positive".into());
        }
        if self.n_negative_bags + self.n_positive_bags == 0 {
            return bad("at least one bag is required".into());
        }
        for (name, v) in [
            ("cluster_spread", self.cluster_spread),
            ("tumor_shift", self.tumor_shift),
            ("noise_sigma", self.noise_sigma),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be finite and non-negative"));
            }
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "dim" | "d" => self.dim = parse_value(key, value)?,
            "n_negative_bags" | "negatives" => self.n_negative_bags = parse_value(key, value)?,
            "n_positive_bags" | "positives" => self.n_positive_bags = parse_value(key, value)?,
            "instances_per_bag" => self.instances_per_bag = parse_range(key, value)?,
            "witness_rate" => self.witness_rate = parse_range(key, value)?,
            "n_normal_clusters" | "clusters" => self.n_normal_clusters = parse_value(key, value)?,
            "cluster_spread" => self.cluster_spread = parse_value(key, value)?,
            "tumor_shift" => self.tumor_shift = parse_value(key, value)?,
            "noise_sigma" => self.noise_sigma = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            _ => return Err(Error::InvalidArgument(format!("unknown data key `{key}`"))),
        }
        Ok(())
    }

    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        let mut c = SynthConfig::default();
        for (k, v) in pairs {
            c.set(k, v)?;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub dim: usize,
    pub bags: Vec<InstanceBag>,
    /// Generator settings, when the dataset was synthesized in this process.
    pub fingerprint: Option<SynthConfig>,
}

impl Dataset {
    pub fn new(dim: usize, bags: Vec<InstanceBag>) -> Result<Self> {
        if let Some(b) = bags.iter().find(|b| b.dim() != dim) {
            return Err(Error::Shape(format!(
                "bag {} has dimension {} but the dataset declares {dim}",
                b.id,
                b.dim()
            )));
        }
        Ok(Dataset { dim, bags, fingerprint: None })
    }

    pub fn len(&self) -> usize {
        self.bags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bags.is_empty()
    }

    pub fn negatives(&self) -> Vec<&InstanceBag> {
        self.bags.iter().filter(|b| !b.is_positive()).collect()
    }

    pub fn find(&self, id: u32) -> Option<&InstanceBag> {
        self.bags.iter().find(|b| b.id == id)
    }

    pub fn labels(&self) -> Vec<u8> {
        self.bags.iter().map(|b| b.label).collect()
    }
}

/// SplitMix64 finalizer over `base` and a stream index, for independent
/// per-bag / per-run seeds.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Number of positive instances in a bag of `n` at witness rate `rate`.
pub fn positive_count(rate: f64, n: usize) -> usize {
    (((rate * n as f64) - 1e-9).ceil() as usize).clamp(1, n)
}

struct Geometry {
    means: Vec<Vec<f64>>,
    tumor_dir: Vec<f64>,
}

fn generate_bag(cfg: &SynthConfig, geo: &Geometry, id: u32, label: u8) -> Result<InstanceBag> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, u64::from(id)));
    let d = cfg.dim;
    let (nlo, nhi) = cfg.instances_per_bag;
    let n = rng.gen_range(nlo..=nhi);

    let raw: Vec<f64> = (0..cfg.n_normal_clusters).map(|_| Exp1.sample(&mut rng)).collect();
    let total: f64 = raw.iter().sum();
    let mut cumulative = Vec::with_capacity(raw.len());
    let mut acc = 0.0;
    for w in &raw {
        acc += w / total;
        cumulative.push(acc);
    }

    let mut labels = vec![0u8; n];
    if label == 1 {
        let (lo, hi) = cfg.witness_rate;
        let rate = if lo == hi { lo } else { (rng.gen_range(lo.ln()..hi.ln())).exp() };
        for i in sample(&mut rng, n, positive_count(rate, n)) {
            labels[i] = 1;
        }
    }

    let spread = cfg.cluster_spread / (d as f64).sqrt();
    let noise = cfg.noise_sigma / (d as f64).sqrt();
    let mut data = vec![0.0; d * n];
    for (i, &is_tumor) in labels.iter().enumerate() {
        let u: f64 = rng.gen();
        let c = cumulative.iter().position(|&t| u < t).unwrap_or(cumulative.len() - 1);
        let col = &mut data[i * d..(i + 1) * d];
        for (x, m) in col.iter_mut().zip(&geo.means[c]) {
            let g: f64 = StandardNormal.sample(&mut rng);
            *x = m + spread * g;
        }
        if is_tumor == 1 {
            for (x, t) in col.iter_mut().zip(&geo.tumor_dir) {
                let g: f64 = StandardNormal.sample(&mut rng);
                *x += cfg.tumor_shift * t + noise * g;
            }
        }
    }
    // Instances are stored at f32 precision on disk; generate at that
    // precision so in-memory and reloaded datasets agree exactly.
    data.iter_mut().for_each(|x| *x = f64::from(*x as f32));
    let instances = Matrix::from_col_major(d, n, &data)?;
    InstanceBag::new(id, label, instances, Some(labels))
}

fn geometry(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Geometry {
    let means = (0..cfg.n_normal_clusters).map(|_| unit_vector(rng, cfg.dim)).collect();
    let tumor_dir = unit_vector(rng, cfg.dim);
    Geometry { means, tumor_dir }
}

fn shuffled_labels(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<u8> {
    let mut labels: Vec<u8> = std::iter::repeat(0)
        .take(cfg.n_negative_bags)
        .chain(std::iter::repeat(1).take(cfg.n_positive_bags))
        .collect();
    for i in (1..labels.len()).rev() {
        let j = rng.gen_range(0..=i);
        labels.swap(i, j);
    }
    labels
}

fn build(cfg: &SynthConfig, geo: &Geometry, labels: &[u8], first_id: u32) -> Result<Vec<InstanceBag>> {
    labels
        .par_iter()
        .enumerate()
        .map(|(i, &label)| generate_bag(cfg, geo, first_id + i as u32, label))
        .collect()
}

/// Generates a dataset; a pure function of the config.
pub fn generate(cfg: &SynthConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let geo = geometry(cfg, &mut rng);
    let labels = shuffled_labels(cfg, &mut rng);
    let mut ds = Dataset::new(cfg.dim, build(cfg, &geo, &labels, 0)?)?;
    ds.fingerprint = Some(cfg.clone());
    Ok(ds)
}

/// Fresh bags from the same distribution as [`generate`] (same cluster
/// means and tumor direction), with ids starting at `first_id`. Bags never
/// coincide with the training set as long as the id ranges are disjoint.
pub fn generate_held_out(
    cfg: &SynthConfig,
    n_negative: usize,
    n_positive: usize,
    first_id: u32,
) -> Result<Dataset> {
    cfg.validate()?;
    let total = n_negative + n_positive;
    if total == 0 || u64::from(first_id) + total as u64 > u64::from(u32::MAX) {
        return Err(Error::InvalidArgument("held-out id range is empty or overflows".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let geo = geometry(cfg, &mut rng);
    let held = SynthConfig { n_negative_bags: n_negative, n_positive_bags: n_positive, ..cfg.clone() };
    let mut label_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0x484F_4C44 + u64::from(first_id)));
    let labels = shuffled_labels(&held, &mut label_rng);
    Dataset::new(cfg.dim, build(cfg, &geo, &labels, first_id)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum WitnessGroup {
    Negative,
    Macro,
    Micro,
}

impl WitnessGroup {
    pub fn name(self) -> &'static str {
        match self {
            WitnessGroup::Negative => "negative",
            WitnessGroup::Macro => "macro",
            WitnessGroup::Micro => "micro",
        }
    }
}

pub fn witness_group(bag: &InstanceBag) -> Result<WitnessGroup> {
    witness_group_at(bag, MICRO_THRESHOLD)
}

pub fn witness_group_at(bag: &InstanceBag, threshold: f64) -> Result<WitnessGroup> {
    let rate = bag.witness_rate().ok_or(Error::MissingInstanceLabels(bag.id))?;
    Ok(if bag.label == 0 {
        WitnessGroup::Negative
    } else if rate < threshold {
        WitnessGroup::Micro
    } else {
        WitnessGroup::Macro
    })
}

/// Stratified seeded split into `(train, validation)`; each class
/// contributes `round(ratio * count)` bags to validation.
pub fn split(
    bags: &[InstanceBag],
    val_ratio: f64,
    seed: u64,
) -> Result<(Vec<InstanceBag>, Vec<InstanceBag>)> {
    if !(val_ratio > 0.0 && val_ratio < 1.0) {
        return Err(Error::InvalidArgument("val_ratio must lie in (0, 1)".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_val = vec![false; bags.len()];
    for class in [0u8, 1] {
        let mut idx: Vec<usize> = (0..bags.len()).filter(|&i| bags[i].label == class).collect();
        let n_val = (val_ratio * idx.len() as f64).round() as usize;
        if n_val == 0 || n_val == idx.len() {
            return Err(Error::SingleClass(if class == 0 {
                "negative bags missing from one side of the split"
            } else {
                "positive bags missing from one side of the split"
            }));
        }
        for i in (1..idx.len()).rev() {
            let j = rng.gen_range(0..=i);
            idx.swap(i, j);
        }
        for &i in &idx[..n_val] {
            in_val[i] = true;
        }
    }
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (bag, v) in bags.iter().zip(in_val) {
        if v {
            val.push(bag.clone());
        } else {
            train.push(bag.clone());
        }
    }
    Ok((train, val))
}
