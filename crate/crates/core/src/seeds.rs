//! Deterministic per-stage random streams derived from one master seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fnv1a(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

/// Seed of the stream named `label`.
pub fn substream_seed(master: u64, label: &str) -> u64 {
    fnv1a(label) ^ master
}

pub fn substream(master: u64, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(substream_seed(master, label))
}

/// Stream `index` of the family `label`, e.g. one per Monte Carlo rerun.
pub fn indexed(master: u64, label: &str, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(master, label));
    rng.set_stream(index);
    rng
}
