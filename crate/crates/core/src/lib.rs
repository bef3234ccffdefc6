//! Two-stage generalized block OMP for block-sparse signals with unknown
//! block boundaries, with brute-force tools for restricted isometry
//! constants over pseudoblock-interleaved supports.

pub mod analysis;
pub mod error;
pub mod experiments;
pub mod io;
pub mod linalg;
pub mod recovery;
pub mod scalar;
pub mod sensing;
pub mod signal;

pub use error::{Error, Result};
pub use scalar::{Field, Scalar};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator behind every seeded operation.
pub type Rng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
