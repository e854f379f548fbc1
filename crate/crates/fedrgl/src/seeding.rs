//! Deterministic RNG stream derivation.
//!
//! Every stochastic draw in a run is keyed by the master seed plus a purpose
//! tag and coordinates such as (client, round, epoch, view). Streams derived
//! from distinct keys are independent, so results do not depend on the order
//! in which parallel client workers execute.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tags for derived RNG streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    ModelInit,
    Split,
    Louvain,
    NoiseRates,
    NoiseInject,
    Augment,
    SbmEdges,
    SbmFeatures,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::ModelInit => 1,
            Purpose::Split => 2,
            Purpose::Louvain => 3,
            Purpose::NoiseRates => 4,
            Purpose::NoiseInject => 5,
            Purpose::Augment => 6,
            Purpose::SbmEdges => 7,
            Purpose::SbmFeatures => 8,
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Mix a master seed with a purpose tag and coordinates into one u64.
pub fn derive(master: u64, purpose: Purpose, coords: &[u64]) -> u64 {
    let mut state = splitmix64(master ^ splitmix64(purpose.tag()));
    for &c in coords {
        state = splitmix64(state ^ splitmix64(c.wrapping_add(0x51_7cc1_b727_220a_95)));
    }
    state
}

/// A fresh ChaCha stream for the given key.
pub fn stream(master: u64, purpose: Purpose, coords: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(master, purpose, coords))
}
