use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::graph::{DistanceField, PageId};

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Game seed for one task under a run-level base seed.
pub fn episode_seed(base: u64, source: PageId, target: PageId) -> u64 {
    mix64(base ^ mix64(((source.0 as u64) << 32) | target.0 as u64))
}

/// RNG for one step of one game. Independent of every other step, so a
/// replay or a page refresh reproduces the same shuffle.
pub fn step_rng(game_seed: u64, step_index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix64(game_seed ^ mix64(step_index as u64)))
}

/// Chooses the links shown at one step.
///
/// With at most `cap` neighbors all of them are shown. Otherwise the `cap`
/// neighbors closest to the target are kept, ties going to the lower id.
/// Either way the result is shuffled with `rng`.
pub fn filter_links(
    neighbors: &[u32],
    field: &DistanceField,
    cap: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<PageId> {
    let mut kept: Vec<PageId> = neighbors.iter().map(|&v| PageId(v)).collect();
    if kept.len() > cap {
        kept.sort_unstable_by_key(|&v| (field.get(v), v));
        kept.truncate(cap);
    }
    kept.shuffle(rng);
    kept
}
