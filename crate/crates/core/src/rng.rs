//! Deterministic, splittable random streams.
//!
//! A stream is a ChaCha12 generator keyed by the experiment seed, with the
//! ChaCha stream id selecting an independent sequence. Forking derives a new
//! stream id from the parent id and a label, so children depend only on
//! `(seed, stream_id, label)` and never on how many draws the parent made.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha12Rng,
}

/// Serializable position of a stream, enough to resume it exactly.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub stream_id: u64,
    pub word_pos: u128,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn key_for(seed: u64) -> [u8; 32] {
    let mut key = [0u8; 32];
    let mut s = seed;
    for chunk in key.chunks_exact_mut(8) {
        s = splitmix64(s);
        chunk.copy_from_slice(&s.to_le_bytes());
    }
    key
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha12Rng::from_seed(key_for(seed));
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn from_state(state: RngState) -> Self {
        let mut s = Self::new(state.seed, state.stream_id);
        s.rng.set_word_pos(state.word_pos);
        s
    }

    pub fn state(&self) -> RngState {
        RngState {
            seed: self.seed,
            stream_id: self.stream_id,
            word_pos: self.rng.get_word_pos(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Child stream determined by this stream's identity and `label`.
    pub fn fork(&self, label: &str) -> RngStream {
        let id = splitmix64(self.stream_id ^ splitmix64(fnv1a(label)));
        RngStream::new(self.seed, id)
    }

    /// `fork` with an integer suffix, e.g. one stream per sample.
    pub fn fork_indexed(&self, label: &str, index: u64) -> RngStream {
        self.fork(&format!("{label}#{index}"))
    }

    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn normals(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.normal()).collect()
    }

    /// Uniform on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform integer in [0, n).
    pub fn below(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forks_are_deterministic() {
        let s = RngStream::new(7, 0);
        let mut a = s.fork("a");
        let mut b = s.fork("a");
        for _ in 0..100 {
            assert_eq!(a.normal().to_bits(), b.normal().to_bits());
        }
    }

    #[test]
    fn fork_ignores_parent_draws() {
        let mut s = RngStream::new(7, 0);
        let before = s.fork("x").normal();
        s.normals(10);
        assert_eq!(before.to_bits(), s.fork("x").normal().to_bits());
    }

    #[test]
    fn distinct_labels_give_distinct_streams() {
        let s = RngStream::new(7, 0);
        let a = s.fork("a").normals(1000);
        let b = s.fork("b").normals(1000);
        assert!(a.iter().zip(&b).all(|(x, y)| x != y));
    }

    #[test]
    fn normal_mean_is_near_zero() {
        let mut s = RngStream::new(1234, 5);
        let n = 100_000;
        let mean = s.normals(n).iter().sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn state_round_trip() {
        let mut s = RngStream::new(3, 9);
        s.normals(17);
        let mut r = RngStream::from_state(s.state());
        for _ in 0..10 {
            assert_eq!(s.next_u64(), r.next_u64());
        }
    }
}
