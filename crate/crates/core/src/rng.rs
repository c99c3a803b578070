//! Counter-based random substreams.
//!
//! Every random draw in the simulator comes from a ChaCha stream addressed by
//! `(master seed, purpose, a, b)`. The key is derived from the seed and the
//! purpose; `(a, b)` select the ChaCha stream id. Two callers asking for the
//! same address always see the same numbers, no matter what else was drawn
//! before, which keeps queue delays identical across algorithms and lets
//! sweep workers run in any order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a substream is used for. Part of the stream address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    QueueDelay = 1,
    ComputeJitter = 2,
    LocalSgd = 3,
    Dataset = 4,
    Partition = 5,
    ModelInit = 6,
    PredictionError = 7,
    SweepSeed = 8,
    Probe = 9,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a list of words into one 64-bit value.
pub fn mix(words: &[u64]) -> u64 {
    words
        .iter()
        .fold(0x6A09_E667_F3BC_C908, |acc, &w| splitmix64(acc ^ splitmix64(w)))
}

/// Returns the substream addressed by `(seed, purpose, a, b)`.
pub fn substream(seed: u64, purpose: Purpose, a: u64, b: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(&[seed, purpose as u64]));
    rng.set_stream(mix(&[a, b]));
    rng
}

/// Derives a child seed, e.g. per sweep point and trial.
pub fn derive_seed(seed: u64, a: u64, b: u64) -> u64 {
    mix(&[seed, Purpose::SweepSeed as u64, a, b])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_address_same_numbers() {
        let mut a = substream(42, Purpose::QueueDelay, 3, 7);
        let mut b = substream(42, Purpose::QueueDelay, 3, 7);
        for _ in 0..16 {
            assert_eq!(a.random::<u64>(), b.random::<u64>());
        }
    }

    #[test]
    fn different_addresses_differ() {
        let x: u64 = substream(42, Purpose::QueueDelay, 3, 7).random();
        let y: u64 = substream(42, Purpose::QueueDelay, 3, 8).random();
        let z: u64 = substream(42, Purpose::LocalSgd, 3, 7).random();
        let w: u64 = substream(43, Purpose::QueueDelay, 3, 7).random();
        assert_ne!(x, y);
        assert_ne!(x, z);
        assert_ne!(x, w);
    }
}
