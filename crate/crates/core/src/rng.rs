//! Deterministic random streams.
//!
//! Every stochastic operation takes an explicit generator. Replica `r` of an
//! experiment seeded with `seed` draws from ChaCha8 keyed by `seed` on stream
//! `r`, so results do not depend on scheduling or on how many replicas run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub type SimRng = ChaCha8Rng;

/// Generator for replica `replica` of an experiment seeded with `seed`.
pub fn stream(seed: u64, replica: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica);
    rng
}

/// Runs `count` independent replicas in parallel and returns their results in
/// replica order.
pub fn replicas<T, F>(seed: u64, count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &mut SimRng) -> T + Sync,
{
    (0..count)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, r as u64);
            f(r, &mut rng)
        })
        .collect()
}
