//! Per-query state shared by the graph and relational iterators: the
//! candidate min-heap and the visited bitmap.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use fixedbitset::FixedBitSet;

use crate::model::{l2_sq, RecordId, ScoredRecord};

/// Flat row-major view over vectors and attribute tuples.
#[derive(Debug, Clone, Copy)]
pub struct RecordView<'a> {
    pub vectors: &'a [f32],
    pub dim: usize,
    pub attrs: &'a [f64],
    pub m: usize,
}

impl<'a> RecordView<'a> {
    pub fn len(&self) -> usize {
        self.vectors.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    #[inline]
    pub fn vector(&self, id: RecordId) -> &'a [f32] {
        let s = id as usize * self.dim;
        &self.vectors[s..s + self.dim]
    }

    #[inline]
    pub fn attrs(&self, id: RecordId) -> &'a [f64] {
        let s = id as usize * self.m;
        &self.attrs[s..s + self.m]
    }
}

/// Shared candidate queue (`cq`) and visited bitmap (`va`).
///
/// Setting a visited bit and computing the record's distance happen
/// together in [`SharedState::visit`], so the number of distance
/// computations always equals the bitmap popcount.
#[derive(Debug, Clone)]
pub struct SharedState {
    candidates: BinaryHeap<Reverse<ScoredRecord>>,
    visited: FixedBitSet,
    dist_comps: u64,
}

impl SharedState {
    pub fn new(n: usize) -> Self {
        Self {
            candidates: BinaryHeap::new(),
            visited: FixedBitSet::with_capacity(n),
            dist_comps: 0,
        }
    }

    #[inline]
    pub fn is_visited(&self, id: RecordId) -> bool {
        self.visited.contains(id as usize)
    }

    /// Marks `id` visited and returns its distance to `query`.
    /// The caller must have checked that `id` is unvisited.
    #[inline]
    pub(crate) fn visit(&mut self, id: RecordId, query: &[f32], view: &RecordView<'_>) -> f32 {
        debug_assert!(!self.is_visited(id));
        self.visited.insert(id as usize);
        self.dist_comps += 1;
        l2_sq(query, view.vector(id))
    }

    pub fn push_candidate(&mut self, rec: ScoredRecord) {
        self.candidates.push(Reverse(rec));
    }

    pub fn pop_candidate(&mut self) -> Option<ScoredRecord> {
        self.candidates.pop().map(|Reverse(r)| r)
    }

    pub fn peek_candidate(&self) -> Option<ScoredRecord> {
        self.candidates.peek().map(|Reverse(r)| *r)
    }

    pub fn candidates_len(&self) -> usize {
        self.candidates.len()
    }

    pub fn candidates_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn visited(&self) -> &FixedBitSet {
        &self.visited
    }

    pub fn visited_count(&self) -> usize {
        self.visited.count_ones(..)
    }

    pub fn dist_comps(&self) -> u64 {
        self.dist_comps
    }
}
