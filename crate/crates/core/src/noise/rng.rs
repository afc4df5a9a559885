//! Counter-based random streams.
//!
//! Every sample index and noise channel owns one ChaCha8 stream derived from a
//! single 64-bit base seed: the key is the base seed, the stream id is
//! `(sample << CHANNEL_BITS) | channel`. Sample `k` therefore draws the same
//! numbers whatever the number of workers or the order they run in.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const CHANNEL_BITS: u32 = 20;

/// Channel reserved for Poisson jump times and marks.
pub const JUMP_CHANNEL: u64 = 0;

/// Channel for the fBm pair `(2p, 2p+1)` of modes.
pub fn fbm_pair_channel(pair: usize) -> u64 {
    1 + pair as u64
}

pub fn stream(seed: u64, sample: u64, channel: u64) -> ChaCha8Rng {
    debug_assert!(channel < (1 << CHANNEL_BITS));
    debug_assert!(sample < (1 << (64 - CHANNEL_BITS)));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((sample << CHANNEL_BITS) | channel);
    rng
}
