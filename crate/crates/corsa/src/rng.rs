//! Deterministic RNG substreams.
//!
//! Every random step in the library draws from a ChaCha stream derived from
//! a base seed plus a path of integer tags (iteration, step, unit index).
//! Units that run in parallel therefore see the same randomness regardless
//! of scheduling or thread count, and repeated runs with the same seed are
//! bit-identical.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 step; the standard 64-bit mixer.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a seed with a tag path into a new 64-bit seed.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    let mut state = splitmix64(seed ^ 0xA076_1D64_78BD_642F);
    for &t in tags {
        state = splitmix64(state ^ splitmix64(t.wrapping_add(0x2545_F491_4F6C_DD1D)));
    }
    state
}

/// Derive an independent RNG from `seed` and a tag path.
pub fn substream(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, tags))
}

/// Tags for the Gibbs sweep steps, kept stable so that checkpointed runs
/// remain reproducible across versions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamTag {
    Init = 1,
    Allocation = 2,
    Imputation = 3,
    States = 4,
    Weights = 5,
    Missingness = 6,
    SigmaR = 7,
    PsiR = 8,
    InitialMean = 9,
    Generator = 10,
    Predictive = 11,
    Split = 12,
}

impl StreamTag {
    pub fn tag(self) -> u64 {
        self as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn substreams_are_deterministic() {
        let mut a = substream(7, &[1, 2, 3]);
        let mut b = substream(7, &[1, 2, 3]);
        for _ in 0..16 {
            assert_eq!(a.random::<u64>(), b.random::<u64>());
        }
    }

    #[test]
    fn substreams_differ_across_tags_and_seeds() {
        let mut base = substream(7, &[1, 2, 3]);
        let mut other_tag = substream(7, &[1, 2, 4]);
        let mut other_seed = substream(8, &[1, 2, 3]);
        let x = base.random::<u64>();
        assert_ne!(x, other_tag.random::<u64>());
        assert_ne!(x, other_seed.random::<u64>());
    }

    #[test]
    fn tag_order_matters() {
        let mut a = substream(7, &[1, 2]);
        let mut b = substream(7, &[2, 1]);
        assert_ne!(a.random::<u64>(), b.random::<u64>());
    }
}
