//! Progressive, passrate-adaptive filtered traversal of a [`GraphIndex`].
//!
//! The state owns the efs-bounded top queue, the recycle queue of visited
//! records that fell out of it, and the queue of predicate-passing results
//! not yet handed out. The candidate queue and visited bitmap live in a
//! [`SharedState`] owned by the caller so that another iterator can feed
//! the same traversal.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use fixedbitset::FixedBitSet;

use super::GraphIndex;
use crate::error::{CompassError, Result};
use crate::model::{Predicate, RecordId, ScoredRecord, SearchConfig};
use crate::visit::{RecordView, SharedState};

/// Branch and work counters of one traversal.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GraphStats {
    pub predicate_evals: u64,
    pub routing_comps: u64,
    pub one_hop: u64,
    pub two_hop: u64,
    pub low_sel_breaks: u64,
    pub next_calls: u64,
}

#[derive(Debug, Clone)]
pub struct GraphSearchState<'a> {
    graph: &'a GraphIndex,
    view: RecordView<'a>,
    query: &'a [f32],
    predicate: &'a Predicate,
    batch: usize,
    alpha: f64,
    beta: f64,
    efs: usize,
    delta_efs: usize,
    top: BinaryHeap<ScoredRecord>,
    recycle: BinaryHeap<Reverse<ScoredRecord>>,
    results: BinaryHeap<Reverse<ScoredRecord>>,
    /// Records ever pushed onto the shared candidate queue by this state.
    shared_once: FixedBitSet,
    /// Predicate outcome of every record this state visited.
    passed: FixedBitSet,
    unshared_in_recycle: usize,
    last_sel: f64,
    scratch: Vec<bool>,
    scratch_node: Option<RecordId>,
    stats: GraphStats,
}

impl<'a> GraphSearchState<'a> {
    /// Opens a traversal: selects the entry point and visits it.
    ///
    /// `batch` caps the number of records returned by each [`Self::next`]
    /// call (the query's `k`). `shared` must be fresh for this query.
    pub fn open(
        graph: &'a GraphIndex,
        view: RecordView<'a>,
        query: &'a [f32],
        predicate: &'a Predicate,
        batch: usize,
        config: &SearchConfig,
        shared: &mut SharedState,
    ) -> Self {
        let n = graph.len();
        let mut state = Self {
            graph,
            view,
            query,
            predicate,
            batch: batch.max(1),
            alpha: config.alpha,
            beta: config.beta,
            efs: 0,
            delta_efs: config.delta_efs.max(1),
            top: BinaryHeap::new(),
            recycle: BinaryHeap::new(),
            results: BinaryHeap::new(),
            shared_once: FixedBitSet::with_capacity(n),
            passed: FixedBitSet::with_capacity(n),
            unshared_in_recycle: 0,
            last_sel: 1.0,
            scratch: Vec::new(),
            scratch_node: None,
            stats: GraphStats::default(),
        };
        let (entry, routing) = graph.select_entry_point(view.vectors, view.dim, query);
        state.stats.routing_comps += routing;
        if !shared.is_visited(entry) {
            let passed = state.eval(entry);
            state.visit(entry, passed, shared);
        }
        state
    }

    pub fn efs(&self) -> usize {
        self.efs
    }

    pub fn stats(&self) -> GraphStats {
        self.stats
    }

    /// Contents of the top queue, ascending.
    pub fn top_records(&self) -> Vec<ScoredRecord> {
        self.top.clone().into_sorted_vec()
    }

    /// Contents of the recycle queue, ascending.
    pub fn recycle_records(&self) -> Vec<ScoredRecord> {
        let mut v: Vec<_> = self.recycle.iter().map(|Reverse(r)| *r).collect();
        v.sort();
        v
    }

    /// Pending filtered results, ascending.
    pub fn pending_results(&self) -> Vec<ScoredRecord> {
        let mut v: Vec<_> = self.results.iter().map(|Reverse(r)| *r).collect();
        v.sort();
        v
    }

    pub fn was_shared(&self, id: RecordId) -> bool {
        self.shared_once.contains(id as usize)
    }

    /// True once no further call can yield records or expand the search.
    pub fn exhausted(&self, shared: &SharedState) -> bool {
        shared.candidates_empty() && self.unshared_in_recycle == 0 && self.results.is_empty()
    }

    #[inline]
    fn eval(&mut self, id: RecordId) -> bool {
        self.stats.predicate_evals += 1;
        self.predicate.matches(self.view.attrs(id))
    }

    /// Visits an unvisited record: computes its distance once and routes it
    /// into the top/shared/result queues or the recycle queue.
    pub fn maintain_queues(&mut self, id: RecordId, passed: bool, shared: &mut SharedState) -> Result<()> {
        if shared.is_visited(id) {
            return Err(CompassError::AlreadyVisited(id));
        }
        self.visit(id, passed, shared);
        Ok(())
    }

    fn visit(&mut self, id: RecordId, passed: bool, shared: &mut SharedState) {
        let rec = ScoredRecord::new(id, shared.visit(id, self.query, &self.view));
        if passed {
            self.passed.insert(id as usize);
        }
        let admit = self.top.len() < self.efs || self.top.peek().is_none_or(|max| rec < *max);
        if admit {
            shared.push_candidate(rec);
            self.shared_once.insert(id as usize);
            self.top.push(rec);
            if self.top.len() > self.efs {
                let evicted = self.top.pop().expect("top is non-empty");
                self.recycle.push(Reverse(evicted));
            }
            if passed {
                self.results.push(Reverse(rec));
            }
        } else {
            self.recycle.push(Reverse(rec));
            self.unshared_in_recycle += 1;
        }
    }

    /// Grows `efs` by one step and refills the top queue from the recycle
    /// queue, sharing records that never reached the candidate queue.
    pub fn expand_search(&mut self, shared: &mut SharedState) {
        self.efs += self.delta_efs;
        while self.top.len() < self.efs {
            let Some(Reverse(rec)) = self.recycle.pop() else {
                break;
            };
            self.top.push(rec);
            if !self.shared_once.contains(rec.id as usize) {
                self.shared_once.insert(rec.id as usize);
                self.unshared_in_recycle -= 1;
                shared.push_candidate(rec);
                if self.passed.contains(rec.id as usize) {
                    self.results.push(Reverse(rec));
                }
            }
        }
    }

    /// Fraction of `node`'s layer-0 neighbors (visited or not) that pass
    /// the predicate; 0 for a node without neighbors.
    pub fn neighborhood_passrate(&mut self, node: RecordId) -> f64 {
        let neighbors = self.graph.neighbors(node);
        self.scratch.clear();
        self.scratch_node = Some(node);
        for &nb in neighbors {
            let ok = self.eval(nb);
            self.scratch.push(ok);
        }
        if neighbors.is_empty() {
            return 0.0;
        }
        self.scratch.iter().filter(|&&b| b).count() as f64 / neighbors.len() as f64
    }

    /// Visits every unvisited layer-0 neighbor of `node`, passing or not.
    pub fn one_hop_expand(&mut self, node: RecordId, shared: &mut SharedState) {
        self.stats.one_hop += 1;
        let neighbors = self.graph.neighbors(node);
        let known = self.scratch_node == Some(node);
        for (i, &nb) in neighbors.iter().enumerate() {
            if shared.is_visited(nb) {
                continue;
            }
            let passed = if known { self.scratch[i] } else { self.eval(nb) };
            self.visit(nb, passed, shared);
        }
    }

    /// Visits the unvisited passing one-hop neighbors of `node`, then up to
    /// `2M` unvisited passing two-hop neighbors reached through the one-hop
    /// neighbors in adjacency order. Failing records are never visited here.
    pub fn two_hop_expand(&mut self, node: RecordId, shared: &mut SharedState) {
        self.stats.two_hop += 1;
        let neighbors = self.graph.neighbors(node);
        let known = self.scratch_node == Some(node);
        for (i, &nb) in neighbors.iter().enumerate() {
            if shared.is_visited(nb) {
                continue;
            }
            let passed = if known { self.scratch[i] } else { self.eval(nb) };
            if passed {
                self.visit(nb, true, shared);
            }
        }
        let cap = 2 * self.graph.max_degree();
        let mut taken = 0usize;
        'outer: for &nb in neighbors {
            for &second in self.graph.neighbors(nb) {
                if taken >= cap {
                    break 'outer;
                }
                if second == node || shared.is_visited(second) {
                    continue;
                }
                if self.eval(second) {
                    self.visit(second, true, shared);
                    taken += 1;
                }
            }
        }
    }

    /// Pulls the next batch of nearby predicate-passing records.
    ///
    /// Returns up to `batch` records and the neighborhood passrate that
    /// ended the round: the low passrate that triggered a stop, the last one
    /// computed when the top queue converged, or 0 when the candidate queue
    /// ran dry.
    pub fn next(&mut self, shared: &mut SharedState) -> (Vec<ScoredRecord>, f64) {
        self.stats.next_calls += 1;
        self.expand_search(shared);
        let mut sel = None;
        let mut drained = false;
        loop {
            let Some(cand) = shared.pop_candidate() else {
                drained = true;
                break;
            };
            if self.top.len() >= self.efs && self.top.peek().is_some_and(|max| cand > *max) {
                // Converged at this width; keep the candidate for the next
                // round, when a wider top queue may admit it.
                shared.push_candidate(cand);
                break;
            }
            let s = self.neighborhood_passrate(cand.id);
            sel = Some(s);
            if s >= self.alpha {
                self.one_hop_expand(cand.id, shared);
            } else if s >= self.beta {
                self.two_hop_expand(cand.id, shared);
            } else {
                self.stats.low_sel_breaks += 1;
                break;
            }
        }
        let sel = if drained { 0.0 } else { sel.unwrap_or(self.last_sel) };
        self.last_sel = sel;
        let mut out = Vec::with_capacity(self.batch.min(self.results.len()));
        while out.len() < self.batch {
            match self.results.pop() {
                Some(Reverse(r)) => out.push(r),
                None => break,
            }
        }
        (out, sel)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Points on a line at x = id, attributes chosen per test.
    fn line_view(n: usize) -> (Vec<f32>, Vec<f64>) {
        ((0..n).map(|i| i as f32).collect(), (0..n).map(|i| i as f64).collect())
    }

    fn view<'a>(v: &'a [f32], a: &'a [f64]) -> RecordView<'a> {
        RecordView {
            vectors: v,
            dim: 1,
            attrs: a,
            m: 1,
        }
    }

    fn cfg(delta: usize) -> SearchConfig {
        SearchConfig {
            delta_efs: delta,
            ..SearchConfig::for_k(10, 10)
        }
    }

    fn star(n: usize) -> GraphIndex {
        // node 0 connects to everyone else
        let mut adj = vec![(1..n as u32).collect::<Vec<_>>()];
        adj.extend((1..n).map(|_| vec![0]));
        GraphIndex::from_adjacency(adj, 4, 0).unwrap()
    }

    #[test]
    fn open_visits_entry() {
        let (v, a) = line_view(5);
        let g = star(5);
        let q = [0.0f32];
        let pass = Predicate::True;
        let mut shared = SharedState::new(5);
        let s = GraphSearchState::open(&g, view(&v, &a), &q, &pass, 10, &cfg(10), &mut shared);
        assert_eq!(shared.candidates_len(), 1);
        assert_eq!(shared.visited_count(), 1);
        assert_eq!(s.pending_results().len(), 1);
        assert_eq!(s.efs(), 0);

        let fail = Predicate::range(0, 100.0, 200.0);
        let mut shared = SharedState::new(5);
        let s = GraphSearchState::open(&g, view(&v, &a), &q, &fail, 10, &cfg(10), &mut shared);
        assert_eq!(shared.candidates_len(), 1);
        assert!(s.pending_results().is_empty());
    }

    #[test]
    fn maintain_queues_branches() {
        let (v, a) = line_view(20);
        let g = star(20);
        let q = [0.0f32];
        let p = Predicate::True;
        let mut shared = SharedState::new(20);
        let mut s = GraphSearchState::open(&g, view(&v, &a), &q, &p, 10, &cfg(3), &mut shared);
        s.expand_search(&mut shared); // efs = 3, entry back in top
        assert_eq!(s.top_records().len(), 1);
        s.maintain_queues(5, true, &mut shared).unwrap();
        s.maintain_queues(3, true, &mut shared).unwrap();
        assert_eq!(s.top_records().iter().map(|r| r.id).collect::<Vec<_>>(), vec![0, 3, 5]);
        let before = shared.candidates_len();
        // full and farther than max: recycle only
        s.maintain_queues(9, true, &mut shared).unwrap();
        assert_eq!(shared.candidates_len(), before);
        assert_eq!(s.recycle_records().iter().map(|r| r.id).collect::<Vec<_>>(), vec![9]);
        assert!(!s.pending_results().iter().any(|r| r.id == 9));
        // eviction: closer than max, former max (5) moves to recycle
        s.maintain_queues(4, false, &mut shared).unwrap();
        assert_eq!(s.top_records().iter().map(|r| r.id).collect::<Vec<_>>(), vec![0, 3, 4]);
        assert_eq!(s.recycle_records().iter().map(|r| r.id).collect::<Vec<_>>(), vec![5, 9]);
        assert!(!s.pending_results().iter().any(|r| r.id == 4));
        assert!(matches!(
            s.maintain_queues(4, true, &mut shared),
            Err(CompassError::AlreadyVisited(4))
        ));
        assert_eq!(shared.dist_comps() as usize, shared.visited_count());
    }

    #[test]
    fn expand_search_refills_from_recycle() {
        let (v, a) = line_view(20);
        let g = star(20);
        let q = [0.0f32];
        let p = Predicate::True;
        let mut shared = SharedState::new(20);
        let mut s = GraphSearchState::open(&g, view(&v, &a), &q, &p, 10, &cfg(1), &mut shared);
        s.expand_search(&mut shared); // efs 1
        s.maintain_queues(5, true, &mut shared).unwrap(); // to recycle, never shared
        assert!(!s.was_shared(5));
        let before = shared.candidates_len();
        s.expand_search(&mut shared); // efs 2
        assert_eq!(s.top_records().iter().map(|r| r.id).collect::<Vec<_>>(), vec![0, 5]);
        assert!(s.was_shared(5));
        assert_eq!(shared.candidates_len(), before + 1);
        assert!(s.pending_results().iter().any(|r| r.id == 5));
        // empty recycle: only efs grows
        s.expand_search(&mut shared);
        assert_eq!(s.efs(), 3);
        assert_eq!(s.top_records().len(), 2);
    }

    #[test]
    fn expand_search_matches_fresh_replay() {
        // Replay oracle: feeding the same visit sequence at efs = 4 then
        // expanding by 6 must yield the same top/recycle split as feeding
        // it at efs = 10 from scratch.
        let n = 60;
        let v: Vec<f32> = (0..n).map(|i| ((i * 37) % 61) as f32).collect();
        let a = vec![0.0; n];
        let g = GraphIndex::from_adjacency(vec![Vec::new(); n], 2, 0).unwrap();
        let q = [0.0f32];
        let p = Predicate::True;
        let order: Vec<u32> = (1..n as u32).rev().collect();

        let run = |first_delta: usize, expands: usize| {
            let mut shared = SharedState::new(n);
            let mut s = GraphSearchState::open(&g, view(&v, &a), &q, &p, 10, &cfg(first_delta), &mut shared);
            s.expand_search(&mut shared);
            for &id in &order {
                s.maintain_queues(id, true, &mut shared).unwrap();
            }
            for _ in 0..expands {
                s.expand_search(&mut shared);
            }
            (s.top_records(), s.recycle_records(), s)
        };
        let (top_a, rec_a, sa) = run(2, 4); // efs 2 -> 10
        let (top_b, rec_b, _) = run(10, 0);
        assert_eq!(top_a, top_b);
        assert_eq!(rec_a, rec_b);
        assert!(top_a.iter().all(|r| sa.was_shared(r.id)));
    }

    #[test]
    fn passrate_and_one_hop() {
        let (v, a) = line_view(5);
        let g = star(5);
        let q = [0.0f32];
        let all = Predicate::True;
        let mut shared = SharedState::new(5);
        let mut s = GraphSearchState::open(&g, view(&v, &a), &q, &all, 10, &cfg(10), &mut shared);
        assert_eq!(s.neighborhood_passrate(0), 1.0);
        let half = Predicate::range(0, 0.0, 2.0);
        let mut s2 = GraphSearchState::open(&g, view(&v, &a), &q, &half, 10, &cfg(10), &mut SharedState::new(5));
        assert_eq!(s2.neighborhood_passrate(0), 0.5);
        let lonely = GraphIndex::from_adjacency(vec![vec![], vec![]], 2, 0).unwrap();
        let mut s3 = GraphSearchState::open(&lonely, view(&v[..2], &a[..2]), &q, &all, 10, &cfg(10), &mut SharedState::new(2));
        assert_eq!(s3.neighborhood_passrate(0), 0.0);

        s.expand_search(&mut shared);
        let before = shared.dist_comps();
        s.neighborhood_passrate(0);
        s.one_hop_expand(0, &mut shared);
        assert_eq!(shared.dist_comps() - before, 4);
        s.one_hop_expand(0, &mut shared);
        assert_eq!(shared.dist_comps() - before, 4);
    }

    #[test]
    fn two_hop_cap_is_twice_m() {
        // center 0 -> hubs 1..=4 (failing), each hub -> 25 passing leaves.
        let hubs = 4u32;
        let leaves_per = 25u32;
        let n = (1 + hubs + hubs * leaves_per) as usize;
        let mut adj = vec![Vec::new(); n];
        adj[0] = (1..=hubs).collect();
        for h in 1..=hubs {
            let start = 1 + hubs + (h - 1) * leaves_per;
            adj[h as usize] = (start..start + leaves_per).collect();
        }
        let g = GraphIndex::from_adjacency(adj, 16, 0).unwrap();
        let v: Vec<f32> = (0..n).map(|i| i as f32).collect();
        let mut a = vec![1.0; n];
        a[1..=hubs as usize].fill(0.0);
        let p = Predicate::range(0, 0.5, 1.5);
        let q = [0.0f32];
        let mut shared = SharedState::new(n);
        let mut s = GraphSearchState::open(&g, view(&v, &a), &q, &p, 10, &cfg(1000), &mut shared);
        s.expand_search(&mut shared);
        let before = shared.dist_comps();
        s.two_hop_expand(0, &mut shared);
        assert_eq!(shared.dist_comps() - before, 32);
        // hubs fail: attribute-checked, never distance-computed
        assert!((1..=hubs).all(|h| !shared.is_visited(h)));
    }

    #[test]
    fn two_hop_without_passers_computes_nothing() {
        let (v, a) = line_view(5);
        let g = star(5);
        let q = [0.0f32];
        let none = Predicate::range(0, 100.0, 200.0);
        let mut shared = SharedState::new(5);
        let mut s = GraphSearchState::open(&g, view(&v, &a), &q, &none, 10, &cfg(10), &mut shared);
        let comps = shared.dist_comps();
        let queued = shared.candidates_len();
        s.two_hop_expand(0, &mut shared);
        assert_eq!(shared.dist_comps(), comps);
        assert_eq!(shared.candidates_len(), queued);
    }

    #[test]
    fn two_hop_equals_one_hop_when_all_pass() {
        let (v, a) = line_view(5);
        let g = star(5);
        let q = [0.0f32];
        let p = Predicate::True;
        let mut s1 = SharedState::new(5);
        let mut st1 = GraphSearchState::open(&g, view(&v, &a), &q, &p, 10, &cfg(10), &mut s1);
        st1.one_hop_expand(0, &mut s1);
        let mut s2 = SharedState::new(5);
        let mut st2 = GraphSearchState::open(&g, view(&v, &a), &q, &p, 10, &cfg(10), &mut s2);
        st2.two_hop_expand(0, &mut s2);
        assert_eq!(s1.visited(), s2.visited());
    }

    #[test]
    fn next_on_empty_queue_returns_zero_sel() {
        let (v, a) = line_view(3);
        let g = star(3);
        let q = [0.0f32];
        let p = Predicate::True;
        let mut shared = SharedState::new(3);
        let mut s = GraphSearchState::open(&g, view(&v, &a), &q, &p, 10, &cfg(10), &mut shared);
        while shared.pop_candidate().is_some() {}
        let (batch, sel) = s.next(&mut shared);
        assert_eq!(sel, 0.0);
        assert_eq!(batch.len(), 1); // entry was already pending
    }

    #[test]
    fn exhaustive_unfiltered_next_matches_brute_force() {
        use rand::{Rng, SeedableRng};
        let n = 400;
        let dim = 8;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let v: Vec<f32> = (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a = vec![0.0; n];
        let g = GraphIndex::build(&v, dim, super::super::GraphBuildParams { m: 8, efc: 50, seed: 1 }).unwrap();
        let view = RecordView {
            vectors: &v,
            dim,
            attrs: &a,
            m: 1,
        };
        let p = Predicate::True;
        for qi in 0..10 {
            let q: Vec<f32> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut shared = SharedState::new(n);
            let mut s = GraphSearchState::open(&g, view, &q, &p, 10, &cfg(10), &mut shared);
            let mut got = Vec::new();
            let mut visited_before = shared.visited().clone();
            while !s.exhausted(&shared) {
                let (batch, sel) = s.next(&mut shared);
                assert!(sel == 0.0 || sel == 1.0);
                got.extend(batch);
                // progressive consistency
                assert!(visited_before.is_subset(shared.visited()));
                visited_before = shared.visited().clone();
            }
            assert_eq!(s.stats().two_hop, 0);
            assert_eq!(s.stats().low_sel_breaks, 0);
            let mut ids: Vec<u32> = got.iter().map(|r| r.id).collect();
            ids.sort();
            ids.dedup();
            assert_eq!(ids.len(), got.len(), "query {qi}: duplicates");
            assert_eq!(ids, (0..n as u32).collect::<Vec<_>>(), "query {qi}");
            assert_eq!(shared.dist_comps() as usize, shared.visited_count());
        }
    }
}
