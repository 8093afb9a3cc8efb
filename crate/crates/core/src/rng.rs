//! Named, order-independent random streams.
//!
//! Every random draw in the simulator comes from a stream keyed by a seed and a
//! small tuple of coordinates (tick, user, purpose, ...). Two runs that share
//! the seed see the same numbers at the same coordinates no matter what else
//! they did in between, which gives common random numbers across variants.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream purposes. The discriminants are part of the reproducibility contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    World = 1,
    Visit = 2,
    Scroll = 3,
    Click = 4,
    ColdStart = 5,
    Backfill = 6,
    Allocation = 7,
    Ordering = 8,
    Training = 9,
    Warmup = 10,
    Approx = 11,
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a seed and coordinates into one 64-bit key.
pub fn mix(seed: u64, stream: Stream, coords: &[u64]) -> u64 {
    let mut h = splitmix64(seed ^ splitmix64(stream as u64));
    for &c in coords {
        h = splitmix64(h ^ c.wrapping_mul(0xD6E8_FEB8_6659_FD93));
    }
    h
}

pub fn stream_rng(seed: u64, stream: Stream, coords: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed, stream, coords))
}

/// A uniform in [0, 1) addressed directly by coordinates, without building a generator.
pub fn unit_uniform(seed: u64, stream: Stream, coords: &[u64]) -> f64 {
    (mix(seed, stream, coords) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
