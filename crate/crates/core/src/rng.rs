//! Named random sub-streams.
//!
//! Every random quantity in a run is drawn from a stream derived from one
//! master seed. A child seed is `splitmix64(parent ^ fnv1a(tag) ^ splitmix64(index))`,
//! so the stream for `("chain", 2)` under replicate 7 is
//! `derive(derive(master, "replicate", 7), "chain", 2)`. Tags in use:
//!
//! | tag           | index          | consumer                               |
//! |---------------|----------------|----------------------------------------|
//! | `network`     | 0              | homophilous network generation         |
//! | `replicate`   | replicate r    | data generation for replicate r        |
//! | `fit`         | method index   | sampler master seed inside a replicate |
//! | `chain`       | chain c        | one MCMC chain                         |
//! | `jitter`      | chain c        | overdispersed initial values           |
//! | `standardize` | draw s         | Monte Carlo marginalization of draw s  |

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn fnv1a(tag: &str) -> u64 {
    tag.bytes().fold(0xCBF2_9CE4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Child seed for the sub-stream `(tag, index)` of `parent`.
pub fn derive_seed(parent: u64, tag: &str, index: u64) -> u64 {
    splitmix64(parent ^ fnv1a(tag) ^ splitmix64(index))
}

/// Generator for the sub-stream `(tag, index)` of `parent`.
pub fn stream(parent: u64, tag: &str, index: u64) -> SimRng {
    SimRng::seed_from_u64(derive_seed(parent, tag, index))
}
