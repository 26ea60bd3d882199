//! Deterministic randomness with independent per-consumer streams.
//!
//! One master seed drives the whole run. Each consumer (a link's loss
//! process, a flow's jitter process, ...) registers its own stream, realized
//! as a ChaCha12 generator on a distinct stream id. ChaCha12 output is
//! documented as stable across platforms and releases, so identical seed and
//! scenario give bit-identical draws.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamId(usize);

#[derive(Debug)]
pub struct RandomSource {
    seed: u64,
    streams: Vec<ChaCha12Rng>,
}

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        RandomSource {
            seed,
            streams: Vec::new(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Registers the next stream. Registration order is part of the scenario
    /// contract: the same build order yields the same stream layout.
    pub fn register(&mut self) -> StreamId {
        let id = self.streams.len();
        let mut rng = ChaCha12Rng::seed_from_u64(self.seed);
        rng.set_stream(id as u64);
        self.streams.push(rng);
        StreamId(id)
    }

    fn stream(&mut self, id: StreamId) -> &mut ChaCha12Rng {
        self.streams
            .get_mut(id.0)
            .unwrap_or_else(|| panic!("draw from unregistered rng stream {}", id.0))
    }

    /// Next value in [0, 1).
    pub fn uniform(&mut self, id: StreamId) -> f64 {
        self.stream(id).gen::<f64>()
    }

    /// Next value in [-1, 1).
    pub fn symmetric(&mut self, id: StreamId) -> f64 {
        self.uniform(id) * 2.0 - 1.0
    }

    /// Uniform integer in [0, n).
    pub fn below(&mut self, id: StreamId, n: usize) -> usize {
        assert!(n > 0);
        self.stream(id).gen_range(0..n)
    }
}
