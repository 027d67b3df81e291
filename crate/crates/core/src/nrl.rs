//! Negative representation learning: pick the highest-leverage instances of
//! every negative bag and concatenate them into a frozen key matrix.

use std::path::Path;

use rayon::prelude::*;

use crate::binio::{self, Reader, Writer};
use crate::error::{Error, Result};
use crate::linalg::{self, EigenResult, Matrix};
use crate::model::InstanceBag;

pub const DEFAULT_T_MAX: usize = 8;

const KEY_MAGIC: &[u8; 4] = b"CSIK";
const KEY_VERSION: u32 = 1;

/// Which instances of one negative bag became keys.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyProvenance {
    pub bag_id: u32,
    pub selected: Vec<u32>,
}

impl KeyProvenance {
    pub fn t(&self) -> usize {
        self.selected.len()
    }
}

/// Frozen `D x τ` matrix of representative negative instances.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyMatrix {
    keys: Matrix,
    provenance: Vec<KeyProvenance>,
}

impl KeyMatrix {
    pub fn new(keys: Matrix, provenance: Vec<KeyProvenance>) -> Result<Self> {
        let tau: usize = provenance.iter().map(KeyProvenance::t).sum();
        if tau != keys.cols() {
            return Err(Error::Format(format!(
                "provenance accounts for {tau} keys but the matrix has {}",
                keys.cols()
            )));
        }
        if tau == 0 {
            return Err(Error::Empty("key matrix has no keys"));
        }
        for p in &provenance {
            let mut seen = p.selected.clone();
            seen.sort_unstable();
            if seen.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Format(format!(
                    "bag {} lists a selected instance twice",
                    p.bag_id
                )));
            }
        }
        Ok(KeyMatrix { keys, provenance })
    }

    pub fn dim(&self) -> usize {
        self.keys.rows()
    }

    pub fn tau(&self) -> usize {
        self.keys.cols()
    }

    pub fn keys(&self) -> &Matrix {
        &self.keys
    }

    pub fn provenance(&self) -> &[KeyProvenance] {
        &self.provenance
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(KEY_MAGIC, KEY_VERSION);
        w.u32(self.dim() as u32);
        w.u32(self.tau() as u32);
        w.u32(self.provenance.len() as u32);
        for p in &self.provenance {
            w.u32(p.bag_id);
            w.u32(p.selected.len() as u32);
            for &i in &p.selected {
                w.u32(i);
            }
        }
        w.f64s(&self.keys.to_col_major());
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::open(bytes, KEY_MAGIC, KEY_VERSION)?;
        let d = r.u32("key dimension")? as usize;
        let tau = r.u32("key count")? as usize;
        let bags = r.u32("provenance count")? as usize;
        let mut provenance = Vec::with_capacity(bags.min(1 << 16));
        for _ in 0..bags {
            let bag_id = r.u32("provenance bag id")?;
            let t = r.u32("provenance count")? as usize;
            if t > r.remaining() / 4 {
                return Err(Error::Truncated("provenance indices"));
            }
            let selected = (0..t).map(|_| r.u32("provenance index")).collect::<Result<_>>()?;
            provenance.push(KeyProvenance { bag_id, selected });
        }
        let listed: usize = provenance.iter().map(KeyProvenance::t).sum();
        if listed != tau {
            return Err(Error::Format(format!(
                "header declares {tau} keys, provenance lists {listed}"
            )));
        }
        if d == 0 {
            return Err(Error::Format("key dimension is zero".into()));
        }
        let values = r.f64s(d * tau, "key values")?;
        r.finish()?;
        KeyMatrix::new(Matrix::from_col_major(d, tau, &values)?, provenance)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        binio::write_file(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        KeyMatrix::from_bytes(&binio::read_file(path)?)
    }
}

/// Eigenpairs of `AᵀA` restricted to the numerically nonzero spectrum.
///
/// When the bag has more instances than dimensions the decomposition runs on
/// the `D x D` matrix `AAᵀ` and maps each eigenvector back through
/// `v = Aᵀu / √λ`; the nonzero spectra of the two Gram matrices coincide.
pub fn column_space_eigen(a: &Matrix) -> Result<(EigenResult, usize)> {
    let n = a.rows().max(a.cols());
    if a.cols() <= a.rows() {
        let eig = linalg::gram_eigen(a)?;
        let k = linalg::numerical_rank(&eig.eigenvalues, n);
        return Ok((eig, k));
    }
    if a.cols() == 0 {
        return Err(Error::Empty("gram_eigen needs at least one column"));
    }
    let at = a.transpose();
    let dual = linalg::gram_eigen(&at)?;
    let k = linalg::numerical_rank(&dual.eigenvalues, n);
    let mut vecs = Matrix::zeros(k, a.cols());
    for h in 0..k {
        let u = dual.eigenvectors.row(h);
        let inv = 1.0 / dual.eigenvalues[h].sqrt();
        let row = vecs.row_mut(h);
        for (d, &ud) in u.iter().enumerate() {
            linalg::axpy(ud * inv, a.row(d), row);
        }
    }
    let eigenvalues = dual.eigenvalues[..k].to_vec();
    Ok((EigenResult { eigenvalues, eigenvectors: vecs }, k))
}

/// Leverage score of every instance (column) of `a`, plus the numerical rank.
pub fn instance_leverage(a: &Matrix) -> Result<(Vec<f64>, usize)> {
    let (eig, k) = column_space_eigen(a)?;
    let scores = linalg::leverage_scores(&eig, k)?;
    Ok((scores, k))
}

/// Top `min(t_max, n, rank)` instances of a negative bag by leverage score.
/// Ties go to the lower instance index.
pub fn select_representative(bag: &InstanceBag, t_max: usize) -> Result<(Matrix, Vec<usize>)> {
    if bag.is_positive() {
        return Err(Error::PositiveBag(bag.id));
    }
    if bag.is_empty() {
        return Err(Error::Empty("negative bag has no instances"));
    }
    let (scores, rank) = instance_leverage(&bag.instances)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]).then(i.cmp(&j)));
    let t = t_max.min(bag.len()).min(rank);
    order.truncate(t);
    Ok((bag.instances.select_columns(&order), order))
}

/// Builds the key matrix from negative bags, concatenated in ascending bag id
/// order. `max_instances` optionally truncates each bag before selection.
pub fn build_key_matrix(
    negative_bags: &[&InstanceBag],
    t_max: usize,
    max_instances: Option<usize>,
) -> Result<KeyMatrix> {
    if negative_bags.is_empty() {
        return Err(Error::Empty("no negative bags to build keys from"));
    }
    if t_max == 0 {
        return Err(Error::InvalidArgument("t_max must be at least 1".into()));
    }
    let d = negative_bags[0].dim();
    if let Some(b) = negative_bags.iter().find(|b| b.dim() != d) {
        return Err(Error::Shape(format!(
            "bag {} has dimension {} but the first bag has {d}",
            b.id,
            b.dim()
        )));
    }
    let mut bags: Vec<&InstanceBag> = negative_bags.to_vec();
    bags.sort_by_key(|b| b.id);

    let selections: Vec<(Matrix, Vec<usize>)> = bags
        .par_iter()
        .map(|bag| match max_instances {
            Some(cap) if cap < bag.len() => {
                let head: Vec<usize> = (0..cap).collect();
                let truncated = InstanceBag {
                    id: bag.id,
                    label: bag.label,
                    instances: bag.instances.select_columns(&head),
                    instance_labels: None,
                };
                select_representative(&truncated, t_max)
            }
            _ => select_representative(bag, t_max),
        })
        .collect::<Result<_>>()?;

    let provenance = bags
        .iter()
        .zip(&selections)
        .map(|(b, (_, idx))| KeyProvenance {
            bag_id: b.id,
            selected: idx.iter().map(|&i| i as u32).collect(),
        })
        .collect();
    let parts: Vec<Matrix> = selections.into_iter().map(|(m, _)| m).collect();
    KeyMatrix::new(Matrix::hconcat(&parts)?, provenance)
}
