//! Seeded random number streams.
//!
//! Every stochastic stage of the pipeline draws from ChaCha8 with an explicit
//! 64-bit seed and a fixed per-purpose stream id, so changing one stage's
//! consumption pattern never shifts another stage's draws. ChaCha8 is fully
//! specified (RFC 7539 core), giving byte-identical sequences across
//! platforms, unlike `StdRng` whose algorithm may change between releases.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream ids carving one seed into independent substreams.
///
/// Source rows use `SOURCE_ROW_BASE + row_index`; keep other ids well clear.
pub mod stream {
    pub const SOURCE_ROW_BASE: u64 = 0;
    pub const MIXING: u64 = 1_000;
    pub const MODEL_INIT: u64 = 2_000;
    pub const TRAIN_NOISE: u64 = 3_000;
    pub const EVAL_NOISE: u64 = 4_000;
}

/// ChaCha8 generator for `seed`, positioned on substream `stream`.
pub fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
