//! Exact filtered k-NN and the pre-/post-filtering reference strategies.

use crate::model::{l2_sq, Dataset, Predicate, RecordId, ScoredRecord};
use crate::search::CompassIndex;

/// Cost counters of a baseline strategy.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BaselineStats {
    pub dist_comps: u64,
    pub predicate_evals: u64,
    pub rounds: u32,
}

/// Exact top-`k` predicate-passing records by `(dist, id)`.
pub fn brute_force_filtered_knn(dataset: &Dataset, q: &[f32], p: &Predicate, k: usize) -> Vec<ScoredRecord> {
    prefilter_search(dataset, q, p, k).0
}

/// Filter every record first, then rank the survivors exactly.
pub fn prefilter_search(dataset: &Dataset, q: &[f32], p: &Predicate, k: usize) -> (Vec<ScoredRecord>, BaselineStats) {
    let mut stats = BaselineStats {
        rounds: 1,
        ..Default::default()
    };
    let mut passing: Vec<ScoredRecord> = (0..dataset.len() as RecordId)
        .filter(|&id| {
            stats.predicate_evals += 1;
            p.matches(dataset.attributes(id))
        })
        .map(|id| {
            stats.dist_comps += 1;
            ScoredRecord::new(id, l2_sq(q, dataset.vector(id)))
        })
        .collect();
    if passing.len() > k {
        passing.select_nth_unstable(k);
        passing.truncate(k);
    }
    passing.sort_unstable();
    (passing, stats)
}

pub const POSTFILTER_GROWTH: usize = 2;
pub const POSTFILTER_MAX_ROUNDS: u32 = 8;

/// Unfiltered graph search for `k'` results, filtered afterwards; `k'`
/// starts at `k0` and doubles until `k` survivors are found, `k'` reaches
/// `n`, or eight rounds have run.
pub fn postfilter_search(index: &CompassIndex, q: &[f32], p: &Predicate, k: usize, k0: usize) -> (Vec<ScoredRecord>, BaselineStats) {
    let ds = index.dataset();
    let n = ds.len();
    let mut stats = BaselineStats::default();
    let mut k_prime = k0.max(k).min(n);
    loop {
        stats.rounds += 1;
        let (found, comps) = index.graph().search(ds.raw_vectors(), ds.dim(), q, k_prime, k_prime);
        stats.dist_comps += comps;
        stats.predicate_evals += found.len() as u64;
        let mut survivors: Vec<_> = found.into_iter().filter(|r| p.matches(ds.attributes(r.id))).collect();
        if survivors.len() >= k || k_prime >= n || stats.rounds >= POSTFILTER_MAX_ROUNDS {
            survivors.truncate(k);
            return (survivors, stats);
        }
        k_prime = (k_prime * POSTFILTER_GROWTH).min(n);
    }
}
