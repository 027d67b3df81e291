use std::path::Path;

use crate::binio::{self, Reader, Writer};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::InstanceBag;

use super::Dataset;

const DATA_MAGIC: &[u8; 4] = b"CSID";
const DATA_VERSION: u32 = 1;

pub(crate) fn to_bytes(ds: &Dataset) -> Vec<u8> {
    let mut w = Writer::new(DATA_MAGIC, DATA_VERSION);
    w.u32(ds.dim as u32);
    w.u32(ds.bags.len() as u32);
    for bag in &ds.bags {
        w.u32(bag.id);
        w.u8(bag.label);
        w.u8(u8::from(bag.instance_labels.is_some()));
        w.u32(bag.len() as u32);
        if let Some(labels) = &bag.instance_labels {
            for &l in labels {
                w.u8(l);
            }
        }
        for v in bag.instances.to_col_major() {
            w.f32(v as f32);
        }
    }
    w.into_bytes()
}

pub(crate) fn from_bytes(bytes: &[u8]) -> Result<Dataset> {
    let mut r = Reader::open(bytes, DATA_MAGIC, DATA_VERSION)?;
    let dim = r.u32("dimension")? as usize;
    let count = r.u32("bag count")? as usize;
    if dim == 0 {
        return Err(Error::Format("dataset dimension is zero".into()));
    }
    let mut bags = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let id = r.u32("bag id")?;
        let label = r.u8("bag label")?;
        let has_labels = match r.u8("instance label flag")? {
            0 => false,
            1 => true,
            f => return Err(Error::Format(format!("bag {id}: instance label flag {f}"))),
        };
        let n = r.u32("instance count")? as usize;
        if n == 0 {
            return Err(Error::Format(format!("bag {id} has no instances")));
        }
        let needed = n * (usize::from(has_labels) + 4 * dim);
        if needed > r.remaining() {
            return Err(Error::Truncated("bag record"));
        }
        let labels = if has_labels {
            Some((0..n).map(|_| r.u8("instance label")).collect::<Result<Vec<_>>>()?)
        } else {
            None
        };
        let values = (0..n * dim)
            .map(|_| r.f32("instance values").map(f64::from))
            .collect::<Result<Vec<_>>>()?;
        let instances = Matrix::from_col_major(dim, n, &values)
            .map_err(|e| Error::Format(format!("bag {id}: {e}")))?;
        bags.push(InstanceBag::new(id, label, instances, labels)?);
    }
    r.finish()?;
    let mut ids: Vec<u32> = bags.iter().map(|b| b.id).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Format("duplicate bag id".into()));
    }
    Dataset::new(dim, bags)
}

pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    binio::write_file(path, &to_bytes(ds))
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    from_bytes(&binio::read_file(path)?)
}

impl Dataset {
    pub fn to_bytes(&self) -> Vec<u8> {
        to_bytes(self)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        from_bytes(bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthdata::{generate, SynthConfig};

    fn sample() -> Dataset {
        generate(&SynthConfig {
            dim: 5,
            n_negative_bags: 3,
            n_positive_bags: 3,
            instances_per_bag: (4, 9),
            ..SynthConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn round_trip() {
        let ds = sample();
        let back = Dataset::from_bytes(&ds.to_bytes()).unwrap();
        assert_eq!(back.bags, ds.bags);
        assert_eq!(back.to_bytes(), ds.to_bytes());
    }

    #[test]
    fn magic_and_dimension_errors() {
        let bytes = sample().to_bytes();
        let mut bad = bytes.clone();
        bad[1] = 0;
        assert!(matches!(Dataset::from_bytes(&bad), Err(Error::BadMagic { .. })));

        let mut wrong_d = bytes.clone();
        wrong_d[8..12].copy_from_slice(&6u32.to_le_bytes());
        assert!(Dataset::from_bytes(&wrong_d).is_err());

        assert!(matches!(
            Dataset::from_bytes(&bytes[..bytes.len() - 2]),
            Err(Error::Truncated(_))
        ));
    }

    #[test]
    fn inconsistent_labels_rejected() {
        let ds = sample();
        let mut bytes = ds.to_bytes();
        // First bag header: id at 16, label at 20.
        bytes[20] ^= 1;
        assert!(Dataset::from_bytes(&bytes).is_err());
    }
}
