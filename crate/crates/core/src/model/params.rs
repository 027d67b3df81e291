use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::binio::{self, Reader, Writer};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

const CHECKPOINT_MAGIC: &[u8; 4] = b"CSIM";
const CHECKPOINT_VERSION: u32 = 1;

pub const DEFAULT_LATENT_DIM: usize = 256;

/// Names of the ten parameter blocks, in checkpoint order.
pub const BLOCK_NAMES: [&str; 10] =
    ["W_k", "b_k", "W_q", "b_q", "W_v", "b_v", "W_s", "b_s", "W_c", "b_c"];

/// Learnable parameters of the cross-attention network and bag classifier.
///
/// `w_k`, `w_q` and `w_v` are `D x D_h`; `w_s` has one weight per key and
/// `w_c` one weight per latent dimension. The same layout doubles as the
/// gradient carrier.
#[derive(Debug, Clone, PartialEq)]
pub struct CasiiParams {
    pub w_k: Matrix,
    pub b_k: Vec<f64>,
    pub w_q: Matrix,
    pub b_q: Vec<f64>,
    pub w_v: Matrix,
    pub b_v: Vec<f64>,
    pub w_s: Vec<f64>,
    pub b_s: f64,
    pub w_c: Vec<f64>,
    pub b_c: f64,
}

pub type Gradients = CasiiParams;

fn uniform_block(rng: &mut ChaCha8Rng, len: usize, fan_in: usize, fan_out: usize) -> Vec<f64> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..len).map(|_| rng.gen_range(-bound..bound)).collect()
}

impl CasiiParams {
    /// Fan-aware uniform weights and zero biases, reproducible from `seed`.
    pub fn init(d: usize, d_h: usize, tau: usize, seed: u64) -> Result<Self> {
        if d == 0 || d_h == 0 || tau == 0 {
            return Err(Error::InvalidArgument(format!(
                "dimensions must be positive (D={d}, D_h={d_h}, tau={tau})"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w_k = Matrix::from_vec(d, d_h, uniform_block(&mut rng, d * d_h, d, d_h))?;
        let w_q = Matrix::from_vec(d, d_h, uniform_block(&mut rng, d * d_h, d, d_h))?;
        let w_v = Matrix::from_vec(d, d_h, uniform_block(&mut rng, d * d_h, d, d_h))?;
        let w_s = uniform_block(&mut rng, tau, tau, 1);
        let w_c = uniform_block(&mut rng, d_h, d_h, 1);
        Ok(CasiiParams {
            w_k,
            b_k: vec![0.0; d_h],
            w_q,
            b_q: vec![0.0; d_h],
            w_v,
            b_v: vec![0.0; d_h],
            w_s,
            b_s: 0.0,
            w_c,
            b_c: 0.0,
        })
    }

    pub fn zeros(d: usize, d_h: usize, tau: usize) -> Self {
        CasiiParams {
            w_k: Matrix::zeros(d, d_h),
            b_k: vec![0.0; d_h],
            w_q: Matrix::zeros(d, d_h),
            b_q: vec![0.0; d_h],
            w_v: Matrix::zeros(d, d_h),
            b_v: vec![0.0; d_h],
            w_s: vec![0.0; tau],
            b_s: 0.0,
            w_c: vec![0.0; d_h],
            b_c: 0.0,
        }
    }

    pub fn zeros_like(&self) -> Self {
        CasiiParams::zeros(self.input_dim(), self.latent_dim(), self.tau())
    }

    pub fn input_dim(&self) -> usize {
        self.w_k.rows()
    }

    pub fn latent_dim(&self) -> usize {
        self.w_k.cols()
    }

    pub fn tau(&self) -> usize {
        self.w_s.len()
    }

    /// Flat views of every block in [`BLOCK_NAMES`] order.
    pub fn blocks(&self) -> [&[f64]; 10] {
        [
            self.w_k.data(),
            &self.b_k,
            self.w_q.data(),
            &self.b_q,
            self.w_v.data(),
            &self.b_v,
            &self.w_s,
            std::slice::from_ref(&self.b_s),
            &self.w_c,
            std::slice::from_ref(&self.b_c),
        ]
    }

    pub fn blocks_mut(&mut self) -> [&mut [f64]; 10] {
        [
            self.w_k.data_mut(),
            &mut self.b_k,
            self.w_q.data_mut(),
            &mut self.b_q,
            self.w_v.data_mut(),
            &mut self.b_v,
            &mut self.w_s,
            std::slice::from_mut(&mut self.b_s),
            &mut self.w_c,
            std::slice::from_mut(&mut self.b_c),
        ]
    }

    /// True for weight blocks, false for biases.
    pub fn is_weight_block(index: usize) -> bool {
        index % 2 == 0
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    /// First block containing a non-finite entry.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        self.blocks()
            .iter()
            .zip(BLOCK_NAMES)
            .find(|(b, _)| b.iter().any(|v| !v.is_finite()))
            .map(|(_, name)| name)
    }

    pub fn l2_norm(&self) -> f64 {
        self.blocks()
            .iter()
            .flat_map(|b| b.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(CHECKPOINT_MAGIC, CHECKPOINT_VERSION);
        w.u32(self.input_dim() as u32);
        w.u32(self.latent_dim() as u32);
        w.u32(self.tau() as u32);
        for block in self.blocks() {
            w.f64s(block);
        }
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::open(bytes, CHECKPOINT_MAGIC, CHECKPOINT_VERSION)?;
        let d = r.u32("input dimension")? as usize;
        let d_h = r.u32("latent dimension")? as usize;
        let tau = r.u32("key count")? as usize;
        if d == 0 || d_h == 0 || tau == 0 {
            return Err(Error::Format(format!(
                "checkpoint dimensions must be positive (D={d}, D_h={d_h}, tau={tau})"
            )));
        }
        let expected = 3 * (d * d_h + d_h) + tau + 1 + d_h + 1;
        if r.remaining() < expected * 8 {
            return Err(Error::Truncated("checkpoint parameters"));
        }
        let mut p = CasiiParams::zeros(d, d_h, tau);
        for (block, name) in p.blocks_mut().into_iter().zip(BLOCK_NAMES) {
            let values = r.f64s(block.len(), name)?;
            block.copy_from_slice(&values);
        }
        r.finish()?;
        if let Some(name) = p.first_non_finite() {
            return Err(Error::Format(format!("checkpoint block {name} has non-finite values")));
        }
        Ok(p)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        binio::write_file(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        CasiiParams::from_bytes(&binio::read_file(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = CasiiParams::init(12, 5, 7, 42).unwrap();
        let b = CasiiParams::init(12, 5, 7, 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, CasiiParams::init(12, 5, 7, 43).unwrap());
        assert!(a.b_k.iter().chain(&a.b_q).chain(&a.b_v).all(|&x| x == 0.0));
        assert_eq!((a.b_s, a.b_c), (0.0, 0.0));
        let proj = (6.0f64 / 17.0).sqrt();
        assert!(a.w_q.data().iter().all(|x| x.abs() <= proj));
        assert!(a.w_s.iter().all(|x| x.abs() <= (6.0f64 / 8.0).sqrt()));
        assert!(a.w_c.iter().all(|x| x.abs() <= (6.0f64 / 6.0).sqrt()));
        assert!(CasiiParams::init(0, 5, 7, 1).is_err());
    }

    #[test]
    fn checkpoint_round_trip_and_errors() {
        let p = CasiiParams::init(4, 3, 5, 9).unwrap();
        let bytes = p.to_bytes();
        assert_eq!(bytes.len(), 4 + 4 * 4 + 8 * (3 * (12 + 3) + 5 + 1 + 3 + 1));
        let q = CasiiParams::from_bytes(&bytes).unwrap();
        assert_eq!(q.to_bytes(), bytes);
        assert!(matches!(
            CasiiParams::from_bytes(&bytes[..bytes.len() - 1]),
            Err(Error::Truncated(_))
        ));
        let mut bad = bytes.clone();
        bad[3] = b'K';
        assert!(matches!(CasiiParams::from_bytes(&bad), Err(Error::BadMagic { .. })));
    }
}
