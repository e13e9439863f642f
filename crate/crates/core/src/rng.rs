//! Deterministic random source shared by every allocator.
//!
//! All randomness flows through [`SimRng`], a ChaCha8 stream seeded from a
//! 64-bit value. Bounded integers are drawn on `u64` so the same seed
//! replays the same allocation on 32- and 64-bit targets alike.
//!
//! Per-trial streams are derived with [`mix_seed`]:
//!
//! ```text
//! mix(seed, cell, trial) = sm(sm(sm(seed) ^ cell) ^ trial)
//! ```
//!
//! where `sm` is the SplitMix64 output function (add the golden gamma,
//! then two xor-shift-multiply rounds).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smallvec::SmallVec;

use crate::error::ConfigError;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the seed of one trial of one grid cell.
pub fn mix_seed(seed: u64, cell: u64, trial: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ cell) ^ trial)
}

#[derive(Clone, Debug)]
pub struct SimRng {
    inner: ChaCha8Rng,
}

impl SimRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn for_trial(seed: u64, cell: u64, trial: u64) -> Self {
        Self::new(mix_seed(seed, cell, trial))
    }

    /// Uniform index in `[0, bound)`. `bound` must be positive.
    #[inline]
    pub fn below(&mut self, bound: usize) -> usize {
        debug_assert!(bound > 0);
        self.inner.gen_range(0..bound as u64) as usize
    }

    /// Uniform real in `[0, 1)`.
    #[inline]
    pub fn unit(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    /// Draws `d` distinct bins out of `n`, in draw order.
    pub fn choose_candidates(&mut self, n: usize, d: usize) -> Result<Vec<usize>, ConfigError> {
        if d == 0 {
            return Err(ConfigError::NoChoices);
        }
        if d > n {
            return Err(ConfigError::TooManyChoices { d, n });
        }
        let mut out = Vec::with_capacity(d);
        self.fill_candidates(n, d, &mut out);
        Ok(out)
    }

    /// Partial Fisher-Yates over the virtual array `0..n`: step `i` swaps
    /// position `i` with a uniform position in `i..n` and emits the value
    /// landing at `i`. Exactly `d` calls to [`SimRng::below`] are made.
    pub(crate) fn fill_candidates(&mut self, n: usize, d: usize, out: &mut Vec<usize>) {
        debug_assert!(1 <= d && d <= n);
        out.clear();
        if d > 16 && d * 4 >= n {
            let mut slots: Vec<usize> = (0..n).collect();
            for i in 0..d {
                let r = i + self.below(n - i);
                slots.swap(i, r);
                out.push(slots[i]);
            }
            return;
        }
        // Only displaced positions are stored; untouched position p holds p.
        let mut displaced: SmallVec<[(usize, usize); 16]> = SmallVec::new();
        let lookup = |displaced: &SmallVec<[(usize, usize); 16]>, p: usize| {
            displaced
                .iter()
                .find(|(pos, _)| *pos == p)
                .map_or(p, |(_, v)| *v)
        };
        for i in 0..d {
            let r = i + self.below(n - i);
            let at_r = lookup(&displaced, r);
            let at_i = lookup(&displaced, i);
            match displaced.iter_mut().find(|(pos, _)| *pos == r) {
                Some(slot) => slot.1 = at_i,
                None => displaced.push((r, at_i)),
            }
            out.push(at_r);
        }
    }
}

impl rand::RngCore for SimRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.inner.try_fill_bytes(dest)
    }
}

/// Free-function form of [`SimRng::choose_candidates`].
pub fn choose_candidates(rng: &mut SimRng, n: usize, d: usize) -> Result<Vec<usize>, ConfigError> {
    rng.choose_candidates(n, d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn forced_subsets() {
        let mut rng = SimRng::new(7);
        assert_eq!(rng.choose_candidates(1, 1).unwrap(), vec![0]);
        let mut all = rng.choose_candidates(5, 5).unwrap();
        all.sort_unstable();
        assert_eq!(all, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn too_many_choices_is_a_config_error() {
        let mut rng = SimRng::new(0);
        assert_eq!(
            rng.choose_candidates(3, 4),
            Err(ConfigError::TooManyChoices { d: 4, n: 3 })
        );
        assert_eq!(rng.choose_candidates(3, 0), Err(ConfigError::NoChoices));
    }

    #[test]
    fn pinned_seed_regression_vector() {
        // Frozen from the first draw of seed 42; guards the stream contract.
        let mut rng = SimRng::new(42);
        assert_eq!(rng.choose_candidates(4, 2).unwrap(), vec![1, 0]);
    }

    #[test]
    fn sparse_and_dense_paths_agree() {
        // The dense path is the textbook shuffle; both must emit the same
        // sequence for the same stream.
        for seed in 0..50u64 {
            let (n, d) = (40, 20);
            let mut a = SimRng::new(seed);
            let mut got = Vec::new();
            a.fill_candidates(n, d, &mut got);

            let mut b = SimRng::new(seed);
            let mut slots: Vec<usize> = (0..n).collect();
            let mut want = Vec::new();
            for i in 0..d {
                let r = i + b.below(n - i);
                slots.swap(i, r);
                want.push(slots[i]);
            }
            assert_eq!(got, want);

            let mut c = SimRng::new(seed);
            let mut sparse = Vec::new();
            // d = 10 < 16 takes the sparse path
            c.fill_candidates(n, 10, &mut sparse);
            assert_eq!(&sparse[..], &want[..10]);
        }
    }

    #[test]
    fn mix_seed_separates_streams() {
        let a = mix_seed(1, 0, 0);
        let b = mix_seed(1, 0, 1);
        let c = mix_seed(1, 1, 0);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_ne!(b, c);
        assert_eq!(a, mix_seed(1, 0, 0));
    }

    #[test]
    fn pair_frequencies_are_uniform() {
        // 45 pairs of 10 bins; chi-square against the uniform law.
        let trials = 200_000;
        let mut rng = SimRng::new(2024);
        let mut counts: HashMap<(usize, usize), u64> = HashMap::new();
        for _ in 0..trials {
            let c = rng.choose_candidates(10, 2).unwrap();
            let key = (c[0].min(c[1]), c[0].max(c[1]));
            *counts.entry(key).or_default() += 1;
        }
        assert_eq!(counts.len(), 45);
        let expected = trials as f64 / 45.0;
        let se = (expected * (1.0 - 1.0 / 45.0)).sqrt();
        let mut chi2 = 0.0;
        for &c in counts.values() {
            assert!((c as f64 - expected).abs() <= 5.0 * se);
            chi2 += (c as f64 - expected).powi(2) / expected;
        }
        // chi-square(44) upper 1% point
        assert!(chi2 < 68.71, "chi2 = {chi2}");
    }
}
