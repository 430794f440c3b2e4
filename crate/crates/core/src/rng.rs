//! Seeded random-number streams.
//!
//! Every source of randomness in the crate is an explicit [`ChaCha8Rng`]
//! derived from a master seed and a stream index. Distinct indices give
//! statistically independent streams, so per-sample and per-purpose
//! generators can run in parallel without ever changing output bytes.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent substream `stream` of the generator seeded by `master`.
pub fn substream(master: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng
}
