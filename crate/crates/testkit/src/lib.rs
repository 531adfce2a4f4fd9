//! Seeded generators and brute-force oracles used by the integration and
//! acceptance suites. Nothing here is used at runtime.

pub mod ingest;
pub mod irr;
pub mod registry;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
