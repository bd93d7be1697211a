//! Seedable counter-style random streams.
//!
//! Every consumer of randomness draws from a named [`Stream`]. A stream is a
//! ChaCha8 nonce derived from `(stream, step)`, and the word position selects a
//! block of members inside that step, so the draws for a given
//! `(stream, step, block)` never depend on how many draws other consumers made
//! or on the order in which blocks are evaluated.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Members sharing one generator inside a step.
pub const MEMBER_BLOCK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    /// Truth-path Euler-Maruyama increments.
    Dynamics = 1,
    /// Observation noise.
    Observation = 2,
    /// EnKF perturbed observations.
    Perturbation = 3,
    /// Forecast noise of ensemble members and particles.
    EnsembleForecast = 4,
    /// Initial-condition draws.
    Initial = 5,
    /// Particle filter resampling.
    Resample = 6,
}

#[derive(Debug, Clone)]
pub struct StreamSet {
    seed: u64,
    base: ChaCha8Rng,
}

impl StreamSet {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            base: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn rng(&self, stream: Stream, step: u64) -> ChaCha8Rng {
        self.block_rng(stream, step, 0)
    }

    /// Generator for members `block * MEMBER_BLOCK ..` of `step`.
    pub fn block_rng(&self, stream: Stream, step: u64, block: u64) -> ChaCha8Rng {
        debug_assert!(step < 1 << 48);
        let mut rng = self.base.clone();
        rng.set_stream(((stream as u64) << 48) | step);
        // 2^36 words per block is far beyond any window's draw count.
        rng.set_word_pos((block as u128) << 36);
        rng
    }
}
