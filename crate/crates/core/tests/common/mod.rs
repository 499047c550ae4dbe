#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spectral_dns::comm::{run_ranks, Communicator, SelfComm};
use spectral_dns::fft::{CommGroups, DistFft, FftBackend};
use spectral_dns::mesh::{Decomposition, Layout};
use spectral_dns::Real;

/// Every decomposition with 1, 2 or 4 ranks that is valid at `n`.
pub fn decompositions(n: usize) -> Vec<Decomposition> {
    let all = [
        Decomposition::serial(),
        Decomposition::slab(1),
        Decomposition::slab(2),
        Decomposition::slab(4),
        Decomposition::pencil(1, 1),
        Decomposition::pencil(2, 1),
        Decomposition::pencil(2, 2),
        Decomposition::pencil(4, 1),
        Decomposition::pencil(4, 2),
        Decomposition::pencil(4, 4),
    ];
    all.into_iter().filter(|d| d.validate(n).is_ok()).collect()
}

/// Runs `f` once per rank of `decomp` and returns the results in rank order.
pub fn on_ranks<R, F>(decomp: Decomposition, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(Box<dyn Communicator>) -> R + Sync,
{
    if decomp.ranks == 1 {
        vec![f(Box::new(SelfComm))]
    } else {
        run_ranks(decomp.ranks, f)
    }
}

pub fn dist_fft<T: Real>(n: usize, decomp: Decomposition, world: Box<dyn Communicator>) -> DistFft<T> {
    let comms = CommGroups::new(world, &decomp).unwrap();
    DistFft::new(n, decomp, comms, FftBackend::default()).unwrap()
}

pub fn random_global(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Reassembles per-rank blocks into one row-major global array.
pub fn assemble<U: Copy + Default>(parts: &[(Layout, Vec<U>)]) -> Vec<U> {
    let g = parts[0].0.global;
    let mut out = vec![U::default(); g[0] * g[1] * g[2]];
    for (layout, data) in parts {
        for i in 0..layout.local[0] {
            for j in 0..layout.local[1] {
                for k in 0..layout.local[2] {
                    let [a, b, c] = layout.global_index([i, j, k]);
                    out[(a * g[1] + b) * g[2] + c] = data[layout.flat(i, j, k)];
                }
            }
        }
    }
    out
}
