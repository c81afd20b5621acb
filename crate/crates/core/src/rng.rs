//! Seeded random streams. Every simulation draws from ChaCha8 generators
//! derived from the run seed; distinct consumers use distinct streams so
//! that, for instance, one player's sampling never shifts another's.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Name recorded in run metadata.
pub const PRNG_NAME: &str = "ChaCha8Rng";

pub type SimRng = ChaCha8Rng;

pub(crate) const GAME_STREAM: u64 = 1;
pub(crate) const ZERO_SUM_CHECK_STREAM: u64 = 2;
pub(crate) const MARKET_STREAM: u64 = 3;
/// Starting points and probe profiles drawn by the verification suites.
pub(crate) const PROBE_STREAM: u64 = 4;
const PLAYER_STREAM_BASE: u64 = 1 << 16;

pub fn stream_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Private sampling stream of player `i`.
pub fn player_rng(seed: u64, i: usize) -> SimRng {
    stream_rng(seed, PLAYER_STREAM_BASE + i as u64)
}
