use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::BitVec;

/// A reproducible random stream identified by `(seed, stream_id)`.
///
/// Backed by ChaCha8, whose 64-bit stream parameter gives independent
/// sequences for distinct ids under one key. The output is fixed by the
/// pair alone, on every platform. Child streams are derived from the
/// identity rather than the current position, so deriving never perturbs
/// the parent.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        Self { seed, stream_id, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Child stream keyed by `label`.
    pub fn split(&self, label: u64) -> Self {
        Self::new(
            self.seed,
            mix64(self.stream_id ^ mix64(label.wrapping_add(0x9E37_79B9_7F4A_7C15))),
        )
    }

    /// Uniform sample in `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    #[inline]
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Uniform index in `0..n` (Lemire's multiply-shift with rejection).
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "RngStream::below(0)");
        let n = n as u64;
        let zone = n.wrapping_neg() % n;
        loop {
            let m = u128::from(self.inner.next_u64()) * u128::from(n);
            if (m as u64) >= zone {
                return (m >> 64) as usize;
            }
        }
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Draws independent Bernoulli bits, entry `i` set with probability `probs[i]`.
pub fn bernoulli_vec(probs: &[f64], rng: &mut RngStream) -> Result<BitVec> {
    if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Contract(format!("probability {p} outside [0, 1]")));
    }
    Ok(BitVec::from_bools(probs.iter().map(|&p| rng.bernoulli(p))))
}
