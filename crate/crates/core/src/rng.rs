//! Counter-based random streams.
//!
//! Every `(seed, stream)` pair addresses an independent ChaCha8 keystream, so
//! a replication can be regenerated in isolation and results never depend on
//! which worker thread ran it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer. A bijection on `u64`.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replication `r` under `master`. Injective in `r` for a fixed master.
pub fn replication_seed(master: u64, r: u64) -> u64 {
    splitmix64(master ^ splitmix64(r))
}

/// Generator for stream `stream` under key `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Fixed-chunk ordered summation of per-item vectors.
///
/// Items are folded in chunks of `CHUNK`, chunk partials are then added in
/// index order. The result depends only on the item order, never on the
/// number of threads that produced the items.
pub fn ordered_sum(items: &[Vec<f64>], width: usize) -> Vec<f64> {
    use rayon::prelude::*;
    const CHUNK: usize = 256;
    let partials: Vec<Vec<f64>> = items
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = vec![0.0; width];
            for item in chunk {
                for (a, v) in acc.iter_mut().zip(item) {
                    *a += v;
                }
            }
            acc
        })
        .collect();
    let mut total = vec![0.0; width];
    for p in &partials {
        for (a, v) in total.iter_mut().zip(p) {
            *a += v;
        }
    }
    total
}
