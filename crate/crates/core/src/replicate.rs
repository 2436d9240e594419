//! Independent replicates with per-index random streams.
//!
//! Every replicate draws from its own ChaCha stream derived from the master
//! seed and the replicate index, so results do not depend on how the work is
//! scheduled. With the `parallel` feature the replicates run on a rayon pool;
//! without it they run in order on the calling thread.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Environment variable that caps the number of worker threads.
pub const WORKERS_ENV: &str = "DEPOSITION_WORKERS";

pub fn replicate_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    family_rng(master_seed, 0, index)
}

/// Second, independent family of streams for the same replicate index
/// (used where one replicate needs two unrelated sources of randomness).
pub fn auxiliary_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    family_rng(master_seed, 1, index)
}

/// Stream `index` of the numbered family `family`; family 0 is [`replicate_rng`].
pub fn family_rng(master_seed: u64, family: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed ^ family.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    rng.set_stream(index);
    rng
}

/// Runs `f(index, rng)` for `index in 0..n` and returns the results in index order.
pub fn map_replicates<T, F>(n: usize, master_seed: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &mut ChaCha8Rng) -> T + Sync + Send,
{
    run(n, &|i| {
        let mut rng = replicate_rng(master_seed, i as u64);
        f(i, &mut rng)
    })
}

#[cfg(feature = "parallel")]
fn run<T: Send>(n: usize, job: &(dyn Fn(usize) -> T + Sync)) -> Vec<T> {
    use rayon::prelude::*;
    match worker_limit() {
        Some(k) => match rayon::ThreadPoolBuilder::new().num_threads(k).build() {
            Ok(pool) => pool.install(|| (0..n).into_par_iter().map(job).collect()),
            Err(_) => (0..n).into_par_iter().map(job).collect(),
        },
        None => (0..n).into_par_iter().map(job).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
fn run<T: Send>(n: usize, job: &(dyn Fn(usize) -> T + Sync)) -> Vec<T> {
    (0..n).map(job).collect()
}

/// Sequential reference path, available regardless of features.
pub fn map_replicates_sequential<T, F>(n: usize, master_seed: u64, f: F) -> Vec<T>
where
    F: Fn(usize, &mut ChaCha8Rng) -> T,
{
    (0..n)
        .map(|i| {
            let mut rng = replicate_rng(master_seed, i as u64);
            f(i, &mut rng)
        })
        .collect()
}

#[cfg(feature = "parallel")]
fn worker_limit() -> Option<usize> {
    std::env::var(WORKERS_ENV).ok()?.parse().ok().filter(|&k| k > 0)
}
