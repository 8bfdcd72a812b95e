//! Counter-based random substreams.
//!
//! Every random draw in the library comes from a ChaCha stream keyed by a
//! master seed, a step counter and a lane index (usually a particle index).
//! Results therefore do not depend on how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive an independent stream for `(seed, step, lane)`.
pub fn substream(seed: u64, step: u64, lane: u64) -> StreamRng {
    let key = splitmix64(seed ^ splitmix64(step.wrapping_add(0x5151_5151)));
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(lane);
    rng
}

/// Lane reserved for serial synchronization points (resampling).
pub const SERIAL_LANE: u64 = u64::MAX;

/// Serializable position in the counter-based stream family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamState {
    pub seed: u64,
    pub counter: u64,
}

impl StreamState {
    pub fn new(seed: u64) -> Self {
        Self { seed, counter: 0 }
    }

    /// Advance the counter and return the step index to key substreams with.
    pub fn next_step(&mut self) -> u64 {
        self.counter += 1;
        self.counter
    }

    pub fn lane(&self, step: u64, lane: u64) -> StreamRng {
        substream(self.seed, step, lane)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: u64 = substream(7, 3, 1).random();
        let b: u64 = substream(7, 3, 1).random();
        let c: u64 = substream(7, 3, 2).random();
        let d: u64 = substream(7, 4, 1).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }
}
