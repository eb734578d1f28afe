//! Seed splitting.
//!
//! Every random stream in an experiment is derived from the master seed, a
//! textual stream tag and a list of integer coordinates (run id, frame
//! index, ...). The tag is folded with 64-bit FNV-1a and every component is
//! absorbed through a SplitMix64 finalizer, so distinct `(tag, coords)`
//! pairs give statistically unrelated ChaCha8 keys while identical pairs
//! always reproduce the same stream.
//!
//! Stream tags used by the harness:
//!
//! | tag        | coordinates        | consumer                        |
//! |------------|--------------------|---------------------------------|
//! | `scene`    | `[run]`            | scene sampling (frozen per run) |
//! | `scene`    | `[run, frame]`     | scene sampling when redrawn     |
//! | `noise`    | `[run, frame]`     | receiver noise of one frame     |
//! | `policy`   | `[run]`            | posterior draws / random picks  |
//! | `code`     | `[code id]`        | catalog code generation         |

use rand::SeedableRng;

use crate::SimRng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(tag: &str) -> u64 {
    tag.bytes()
        .fold(FNV_OFFSET, |h, b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Derive a 64-bit sub-seed for stream `tag` at `coords`.
pub fn derive_seed(master: u64, tag: &str, coords: &[u64]) -> u64 {
    let mut h = splitmix64(master ^ splitmix64(fnv1a(tag)));
    for &c in coords {
        h = splitmix64(h ^ splitmix64(c.wrapping_add(0x632b_e59b_d9b4_e019)));
    }
    h
}

/// Construct the random stream for `tag` at `coords`.
pub fn stream(master: u64, tag: &str, coords: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(master, tag, coords))
}
