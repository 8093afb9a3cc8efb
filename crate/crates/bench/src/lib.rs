//! Seeded fixtures shared by the criterion benches in `benches/`.

use std::collections::BTreeMap;

use invr_core::invr::{retrieve_candidates, CandidatePair};
use invr_core::{ItemId, MipsIndex, UserId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_vectors(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
}

pub fn user_index(n: usize, dim: usize, seed: u64) -> MipsIndex<UserId> {
    let entries = random_vectors(n, dim, seed).into_iter().enumerate().map(|(i, v)| (UserId(i as u32), v));
    MipsIndex::build(entries).expect("valid fixture")
}

/// Candidate lists for `n_items` random items against `index`.
pub fn candidates(
    index: &MipsIndex<UserId>,
    n_items: usize,
    users_per_item: usize,
    overfetch: f64,
    seed: u64,
) -> BTreeMap<ItemId, Vec<CandidatePair>> {
    random_vectors(n_items, index.dim(), seed)
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let item = ItemId(i as u32);
            (item, retrieve_candidates(item, v, index, users_per_item, overfetch).expect("dims match"))
        })
        .collect()
}

/// Long-tailed exposure counts.
pub fn exposure_counts(n: usize, seed: u64) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (1000.0 / rng.random_range(1.0f64..200.0)) as u64).collect()
}

/// Random (history, item, clicked) triples over `n_items` items.
pub fn training_triples(n: usize, n_items: u32, history_len: usize, seed: u64) -> Vec<(Vec<ItemId>, ItemId, bool)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let h = (0..history_len).map(|_| ItemId(rng.random_range(0..n_items))).collect();
            (h, ItemId(rng.random_range(0..n_items)), rng.random_bool(0.2))
        })
        .collect()
}
