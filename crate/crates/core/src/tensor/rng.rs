use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub const CHACHA20: &str = "chacha20";

/// A named, seeded source of randomness.
///
/// Every consumer builds its generator from `(seed, algorithm)`, so two
/// streams with the same pair produce the same draws on any platform.
/// Independent sub-streams are derived with [`RngStream::substream`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    #[serde(default = "default_algorithm")]
    pub algorithm: String,
}

fn default_algorithm() -> String {
    CHACHA20.to_string()
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        RngStream {
            seed,
            algorithm: default_algorithm(),
        }
    }

    pub fn generator(&self) -> ChaCha20Rng {
        assert_eq!(self.algorithm, CHACHA20, "unsupported rng algorithm");
        ChaCha20Rng::seed_from_u64(self.seed)
    }

    /// Child stream keyed by `index`; distinct indices give unrelated streams.
    pub fn substream(&self, index: u64) -> RngStream {
        RngStream {
            seed: splitmix64(self.seed ^ splitmix64(index.wrapping_add(0x6a09_e667_f3bc_c909))),
            algorithm: self.algorithm.clone(),
        }
    }

    /// Child stream keyed by a label, e.g. a pipeline stage name.
    pub fn labeled(&self, label: &str) -> RngStream {
        // FNV-1a over the label bytes
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in label.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        self.substream(h)
    }
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn standard_normal<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

pub fn normal_vec<R: rand::Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| standard_normal(rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_seed_same_draws() {
        let a: Vec<u64> = {
            let mut g = RngStream::new(7).generator();
            (0..8).map(|_| g.random()).collect()
        };
        let b: Vec<u64> = {
            let mut g = RngStream::new(7).generator();
            (0..8).map(|_| g.random()).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn substreams_differ() {
        let s = RngStream::new(1);
        assert_ne!(s.substream(0).seed, s.substream(1).seed);
        assert_ne!(s.labeled("train").seed, s.labeled("sample").seed);
        assert_eq!(s.labeled("train"), s.labeled("train"));
    }
}
