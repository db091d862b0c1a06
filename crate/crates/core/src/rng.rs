//! Named random streams derived from a single scenario seed.
//!
//! Each consumer of randomness asks for a stream by label. The stream seed is
//! the scenario seed xor a stable hash of the label, so adding a new label
//! never shifts the draws of an existing one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub const AQM_STREAM: &str = "aqm";
pub const JITTER_STREAM: &str = "jitter";

// FNV-1a; the output must not change between toolchains, which rules out
// `DefaultHasher`.
const fn label_hash(label: &str) -> u64 {
    let bytes = label.as_bytes();
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    let mut i = 0;
    while i < bytes.len() {
        hash ^= bytes[i] as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        i += 1;
    }
    hash
}

pub fn named_stream(seed: u64, label: &str) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed ^ label_hash(label))
}
