//! Randomized save/load round trips for the three file formats.

#![allow(dead_code)]

use std::path::Path;

use casii::nrl::{KeyMatrix, KeyProvenance};
use casii::synthdata::{load_dataset, save_dataset};
use casii::{CasiiParams, Dataset, InstanceBag, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

fn wide_value(rng: &mut ChaCha8Rng) -> f64 {
    let mantissa: f64 = rng.gen_range(-1.0..1.0);
    mantissa * 10f64.powi(rng.gen_range(-30..30))
}

fn random_dataset(rng: &mut ChaCha8Rng) -> Dataset {
    let dim = rng.gen_range(1..10);
    let n_bags = rng.gen_range(1..6);
    let bags = (0..n_bags)
        .map(|id| {
            let n = rng.gen_range(1..12);
            let data: Vec<f64> = (0..dim * n).map(|_| wide_value(rng)).collect();
            let labels: Option<Vec<u8>> = rng.gen_bool(0.7).then(|| (0..n).map(|_| rng.gen_range(0..2)).collect());
            let label = match &labels {
                Some(l) => u8::from(l.contains(&1)),
                None => rng.gen_range(0..2),
            };
            InstanceBag::new(id * 3 + 1, label, Matrix::from_vec(dim, n, data).unwrap(), labels).unwrap()
        })
        .collect();
    Dataset::new(dim, bags).unwrap()
}

fn random_keys(rng: &mut ChaCha8Rng) -> KeyMatrix {
    let dim = rng.gen_range(1..10);
    let mut provenance = Vec::new();
    for b in 0..rng.gen_range(1..5) {
        let t = rng.gen_range(1..4);
        provenance.push(KeyProvenance { bag_id: b * 7, selected: (0..t).map(|_| rng.gen_range(0..500)).collect() });
    }
    let tau: usize = provenance.iter().map(|p| p.selected.len()).sum();
    let data = (0..dim * tau).map(|_| wide_value(rng)).collect();
    KeyMatrix::new(Matrix::from_vec(dim, tau, data).unwrap(), provenance).unwrap()
}

fn random_params(rng: &mut ChaCha8Rng) -> CasiiParams {
    let mut p = CasiiParams::init(rng.gen_range(1..10), rng.gen_range(1..8), rng.gen_range(1..12), rng.gen()).unwrap();
    for block in p.blocks_mut() {
        for v in block.iter_mut() {
            *v = wide_value(rng);
        }
    }
    p
}

/// Runs `cases` randomized round trips of every format through files in
/// `dir`; returns the first mismatch.
pub fn run(cases: u64, dir: &Path) -> Result<(), String> {
    for case in 0..cases {
        let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE + case);

        let ds = random_dataset(&mut rng);
        let path = dir.join(format!("d{case}.csid"));
        save_dataset(&ds, &path).map_err(|e| e.to_string())?;
        let back = load_dataset(&path).map_err(|e| e.to_string())?;
        if back.dim != ds.dim || back.len() != ds.len() {
            return Err(format!("case {case}: dataset shape changed"));
        }
        for (a, b) in ds.bags.iter().zip(&back.bags) {
            let stored: Vec<u64> = a.instances.data().iter().map(|&x| f64::from(x as f32).to_bits()).collect();
            if (a.id, a.label, &a.instance_labels) != (b.id, b.label, &b.instance_labels) || stored != bits(b.instances.data()) {
                return Err(format!("case {case}: dataset bag {} differs", a.id));
            }
        }
        let again = dir.join(format!("d{case}b.csid"));
        save_dataset(&back, &again).map_err(|e| e.to_string())?;
        if std::fs::read(&path).unwrap() != std::fs::read(&again).unwrap() {
            return Err(format!("case {case}: dataset bytes not stable"));
        }

        let keys = random_keys(&mut rng);
        let path = dir.join(format!("k{case}.csik"));
        keys.save(&path).map_err(|e| e.to_string())?;
        let back = KeyMatrix::load(&path).map_err(|e| e.to_string())?;
        if bits(back.keys().data()) != bits(keys.keys().data()) || back.provenance() != keys.provenance() {
            return Err(format!("case {case}: keys differ"));
        }

        let params = random_params(&mut rng);
        let path = dir.join(format!("m{case}.csim"));
        params.save(&path).map_err(|e| e.to_string())?;
        let back = CasiiParams::load(&path).map_err(|e| e.to_string())?;
        for (i, (a, b)) in params.blocks().iter().zip(back.blocks()).enumerate() {
            if bits(a) != bits(b) {
                return Err(format!("case {case}: checkpoint block {i} differs"));
            }
        }
        if back.to_bytes() != std::fs::read(&path).unwrap() {
            return Err(format!("case {case}: checkpoint bytes not stable"));
        }
    }
    Ok(())
}
