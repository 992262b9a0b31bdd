//! Layered proximity graph (HNSW) over a set of vectors.
//!
//! Construction follows the usual HNSW insertion: each point draws a top
//! layer from a geometric distribution, descends greedily through the
//! layers above it, and on each of its own layers links to neighbors picked
//! by the diversity heuristic from an `efc`-wide beam. Upper layers keep at
//! most `M` links per node, layer 0 keeps at most `2M`.
//!
//! After construction the adjacency is frozen into per-layer CSR arrays.

mod progressive;

pub use progressive::{GraphSearchState, GraphStats};

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{CompassError, Result};
use crate::model::{l2_sq, RecordId, ScoredRecord};

const MAX_LEVEL: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GraphBuildParams {
    /// Maximum out-degree on layers above 0.
    pub m: usize,
    /// Beam width during construction.
    pub efc: usize,
    pub seed: u64,
}

impl Default for GraphBuildParams {
    fn default() -> Self {
        Self {
            m: 16,
            efc: 200,
            seed: 42,
        }
    }
}

/// One layer in CSR form. Layer 0 holds every node and leaves `nodes`
/// empty; upper layers list their (sorted) member ids in `nodes` and
/// index `offsets` by position in that list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layer {
    pub(crate) nodes: Vec<RecordId>,
    pub(crate) offsets: Vec<u64>,
    pub(crate) neighbors: Vec<RecordId>,
}

impl Layer {
    fn from_lists(nodes: Vec<RecordId>, lists: Vec<Vec<RecordId>>) -> Self {
        let mut offsets = Vec::with_capacity(lists.len() + 1);
        offsets.push(0u64);
        let mut neighbors = Vec::with_capacity(lists.iter().map(Vec::len).sum());
        for l in lists {
            neighbors.extend_from_slice(&l);
            offsets.push(neighbors.len() as u64);
        }
        Self {
            nodes,
            offsets,
            neighbors,
        }
    }

    fn position(&self, node: RecordId, level0: bool) -> Option<usize> {
        if level0 {
            let p = node as usize;
            (p + 1 < self.offsets.len()).then_some(p)
        } else {
            self.nodes.binary_search(&node).ok()
        }
    }

    fn slice(&self, pos: usize) -> &[RecordId] {
        &self.neighbors[self.offsets[pos] as usize..self.offsets[pos + 1] as usize]
    }

    pub fn node_count(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphIndex {
    n: usize,
    max_degree: usize,
    entry: RecordId,
    layers: Vec<Layer>,
    params: GraphBuildParams,
}

impl GraphIndex {
    /// Builds the graph over `n = vectors.len() / dim` points.
    pub fn build(vectors: &[f32], dim: usize, params: GraphBuildParams) -> Result<Self> {
        if dim == 0 || vectors.is_empty() {
            return Err(CompassError::EmptyDataset);
        }
        if params.m < 2 {
            return Err(CompassError::InvalidConfig(format!("M = {} must be at least 2", params.m)));
        }
        if params.efc < params.m {
            return Err(CompassError::InvalidConfig(format!(
                "efc = {} must be at least M = {}",
                params.efc, params.m
            )));
        }
        let builder = Builder::new(vectors, dim, params);
        Ok(builder.run())
    }

    /// Wraps an explicit layer-0 adjacency as a single-layer graph.
    pub fn from_adjacency(adjacency: Vec<Vec<RecordId>>, max_degree: usize, entry: RecordId) -> Result<Self> {
        Self::from_layers(vec![(Vec::new(), adjacency)], max_degree, entry)
    }

    /// Assembles a graph from per-layer `(member ids, neighbor lists)`.
    /// Layer 0 must list no members (it implicitly contains every node).
    pub fn from_layers(
        layers: Vec<(Vec<RecordId>, Vec<Vec<RecordId>>)>,
        max_degree: usize,
        entry: RecordId,
    ) -> Result<Self> {
        let n = layers.first().map_or(0, |l| l.1.len());
        if n == 0 {
            return Err(CompassError::EmptyDataset);
        }
        if entry as usize >= n {
            return Err(CompassError::InvalidInput(format!("entry node {entry} out of range")));
        }
        let mut frozen = Vec::with_capacity(layers.len());
        for (level, (nodes, lists)) in layers.into_iter().enumerate() {
            if level == 0 && !nodes.is_empty() {
                return Err(CompassError::InvalidInput("layer 0 must not list members".into()));
            }
            if level > 0 && (nodes.len() != lists.len() || !nodes.windows(2).all(|w| w[0] < w[1])) {
                return Err(CompassError::InvalidInput(format!("layer {level} membership malformed")));
            }
            for (pos, list) in lists.iter().enumerate() {
                let owner = if level == 0 { pos as RecordId } else { nodes[pos] };
                if let Some(bad) = list.iter().find(|&&v| v as usize >= n || v == owner) {
                    return Err(CompassError::InvalidInput(format!(
                        "layer {level}: node {owner} has invalid neighbor {bad}"
                    )));
                }
            }
            frozen.push(Layer::from_lists(nodes, lists));
        }
        Ok(Self {
            n,
            max_degree,
            entry,
            layers: frozen,
            params: GraphBuildParams {
                m: max_degree,
                efc: max_degree,
                seed: 0,
            },
        })
    }

    pub(crate) fn from_raw(n: usize, entry: RecordId, layers: Vec<Layer>, params: GraphBuildParams) -> Self {
        Self {
            n,
            max_degree: params.m,
            entry,
            layers,
            params,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn entry_node(&self) -> RecordId {
        self.entry
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn params(&self) -> GraphBuildParams {
        self.params
    }

    pub(crate) fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Layer-0 adjacency of `node`.
    #[inline]
    pub fn neighbors(&self, node: RecordId) -> &[RecordId] {
        self.layers[0].slice(node as usize)
    }

    /// Adjacency of `node` on `level`; empty when the node is absent there.
    pub fn neighbors_at(&self, level: usize, node: RecordId) -> &[RecordId] {
        self.layers
            .get(level)
            .and_then(|l| l.position(node, level == 0).map(|p| l.slice(p)))
            .unwrap_or(&[])
    }

    /// Member ids of `level` (every node for layer 0).
    pub fn layer_members(&self, level: usize) -> Vec<RecordId> {
        if level == 0 {
            (0..self.n as RecordId).collect()
        } else {
            self.layers[level].nodes.clone()
        }
    }

    /// Greedy unfiltered descent from the top-layer entry through every
    /// layer above 0. Returns the layer-0 start node and the number of
    /// distances computed on the way.
    pub fn select_entry_point(&self, vectors: &[f32], dim: usize, q: &[f32]) -> (RecordId, u64) {
        let vec = |id: RecordId| &vectors[id as usize * dim..(id as usize + 1) * dim];
        let mut cur = self.entry;
        if self.layers.len() <= 1 {
            return (cur, 0);
        }
        let mut comps = 1u64;
        let mut cur_d = l2_sq(q, vec(cur));
        for level in (1..self.layers.len()).rev() {
            loop {
                let mut improved = false;
                for &nb in self.neighbors_at(level, cur) {
                    comps += 1;
                    let d = l2_sq(q, vec(nb));
                    if ScoredRecord::new(nb, d) < ScoredRecord::new(cur, cur_d) {
                        cur = nb;
                        cur_d = d;
                        improved = true;
                    }
                }
                if !improved {
                    break;
                }
            }
        }
        (cur, comps)
    }

    /// Standard unfiltered best-first search returning the `k` nearest
    /// found with beam width `max(ef, k)`, plus the distance count.
    pub fn search(&self, vectors: &[f32], dim: usize, q: &[f32], k: usize, ef: usize) -> (Vec<ScoredRecord>, u64) {
        let (start, mut comps) = self.select_entry_point(vectors, dim, q);
        let mut visited = fixedbitset::FixedBitSet::with_capacity(self.n);
        let ef = ef.max(k);
        let (found, c) = beam_search(
            |id| l2_sq(q, &vectors[id as usize * dim..(id as usize + 1) * dim]),
            |id| self.neighbors(id),
            start,
            ef,
            |id| {
                let fresh = !visited.contains(id as usize);
                visited.insert(id as usize);
                fresh
            },
        );
        comps += c;
        let mut out = found;
        out.truncate(k);
        (out, comps)
    }
}

/// Best-first search on one layer. `fresh` marks a node visited and reports
/// whether it was unvisited. Returns up to `ef` results sorted ascending.
fn beam_search<'n>(
    dist: impl Fn(RecordId) -> f32,
    neighbors: impl Fn(RecordId) -> &'n [RecordId],
    start: RecordId,
    ef: usize,
    mut fresh: impl FnMut(RecordId) -> bool,
) -> (Vec<ScoredRecord>, u64) {
    let mut comps = 1u64;
    fresh(start);
    let s = ScoredRecord::new(start, dist(start));
    let mut candidates = BinaryHeap::from([Reverse(s)]);
    let mut top = BinaryHeap::from([s]);
    while let Some(Reverse(c)) = candidates.pop() {
        if top.len() >= ef && c > *top.peek().expect("top is non-empty") {
            break;
        }
        for &nb in neighbors(c.id) {
            if !fresh(nb) {
                continue;
            }
            comps += 1;
            let r = ScoredRecord::new(nb, dist(nb));
            if top.len() < ef || r < *top.peek().expect("top is non-empty") {
                candidates.push(Reverse(r));
                top.push(r);
                if top.len() > ef {
                    top.pop();
                }
            }
        }
    }
    (top.into_sorted_vec(), comps)
}

struct Builder<'v> {
    vectors: &'v [f32],
    dim: usize,
    params: GraphBuildParams,
    /// links[node][level]
    links: Vec<Vec<Vec<RecordId>>>,
    stamp: Vec<u32>,
    epoch: u32,
}

impl<'v> Builder<'v> {
    fn new(vectors: &'v [f32], dim: usize, params: GraphBuildParams) -> Self {
        let n = vectors.len() / dim;
        Self {
            vectors,
            dim,
            params,
            links: Vec::with_capacity(n),
            stamp: vec![0; n],
            epoch: 0,
        }
    }

    #[inline]
    fn vec(&self, id: RecordId) -> &'v [f32] {
        &self.vectors[id as usize * self.dim..(id as usize + 1) * self.dim]
    }

    #[inline]
    fn dist(&self, a: RecordId, b: RecordId) -> f32 {
        l2_sq(self.vec(a), self.vec(b))
    }

    fn max_links(&self, level: usize) -> usize {
        if level == 0 {
            2 * self.params.m
        } else {
            self.params.m
        }
    }

    fn run(mut self) -> GraphIndex {
        let n = self.vectors.len() / self.dim;
        let mut rng = ChaCha8Rng::seed_from_u64(self.params.seed);
        let mult = 1.0 / (self.params.m as f64).ln();
        let mut entry: RecordId = 0;
        let mut top_level = 0usize;
        for id in 0..n as RecordId {
            let u: f64 = rng.random();
            let level = ((-(1.0 - u).ln() * mult) as usize).min(MAX_LEVEL);
            self.links.push(vec![Vec::new(); level + 1]);
            if id == 0 {
                top_level = level;
                continue;
            }
            self.insert(id, level, entry, top_level);
            if level > top_level {
                top_level = level;
                entry = id;
            }
        }
        self.freeze(n, entry, top_level)
    }

    fn insert(&mut self, id: RecordId, level: usize, entry: RecordId, top_level: usize) {
        let q = self.vec(id);
        let mut cur = ScoredRecord::new(entry, l2_sq(q, self.vec(entry)));
        for l in (level + 1..=top_level).rev() {
            loop {
                let mut improved = false;
                for &nb in &self.links[cur.id as usize][l] {
                    let r = ScoredRecord::new(nb, l2_sq(q, self.vec(nb)));
                    if r < cur {
                        cur = r;
                        improved = true;
                    }
                }
                if !improved {
                    break;
                }
            }
        }
        for l in (0..=level.min(top_level)).rev() {
            let found = self.search_layer(q, cur.id, l);
            cur = found[0];
            let selected = self.select_neighbors(&found, self.params.m);
            for &nb in &selected {
                let cap = self.max_links(l);
                let list = &mut self.links[nb as usize][l];
                list.push(id);
                if list.len() > cap {
                    let owner = nb;
                    let cands: Vec<ScoredRecord> = {
                        let mut c: Vec<_> = self.links[owner as usize][l]
                            .iter()
                            .map(|&x| ScoredRecord::new(x, self.dist(owner, x)))
                            .collect();
                        c.sort();
                        c
                    };
                    self.links[owner as usize][l] = self.select_neighbors(&cands, cap);
                }
            }
            self.links[id as usize][l] = selected;
        }
    }

    fn search_layer(&mut self, q: &[f32], start: RecordId, level: usize) -> Vec<ScoredRecord> {
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.epoch = 1;
        }
        let epoch = self.epoch;
        let Builder {
            vectors,
            dim,
            links,
            stamp,
            params,
            ..
        } = self;
        let dim = *dim;
        let vectors: &[f32] = vectors;
        beam_search(
            |id| l2_sq(q, &vectors[id as usize * dim..(id as usize + 1) * dim]),
            |id| links[id as usize][level].as_slice(),
            start,
            params.efc,
            |id| {
                let s = &mut stamp[id as usize];
                let fresh = *s != epoch;
                *s = epoch;
                fresh
            },
        )
        .0
    }

    /// Diversity heuristic: scanning candidates nearest first, keep one only
    /// if it is closer to the base point than to every kept neighbor. Lists
    /// already within `cap` are kept whole.
    fn select_neighbors(&self, sorted: &[ScoredRecord], cap: usize) -> Vec<RecordId> {
        if sorted.len() <= cap {
            return sorted.iter().map(|r| r.id).collect();
        }
        let mut kept: Vec<RecordId> = Vec::with_capacity(cap);
        for c in sorted {
            if kept.len() >= cap {
                break;
            }
            let good = kept.iter().all(|&r| self.dist(r, c.id) >= c.dist);
            if good {
                kept.push(c.id);
            }
        }
        kept
    }

    fn freeze(self, n: usize, entry: RecordId, top_level: usize) -> GraphIndex {
        let mut layers = Vec::with_capacity(top_level + 1);
        for level in 0..=top_level {
            let mut nodes = Vec::new();
            let mut lists = Vec::new();
            for (id, node_links) in self.links.iter().enumerate() {
                if let Some(list) = node_links.get(level) {
                    if level > 0 {
                        nodes.push(id as RecordId);
                    }
                    lists.push(list.clone());
                }
            }
            layers.push(Layer::from_lists(nodes, lists));
        }
        GraphIndex {
            n,
            max_degree: self.params.m,
            entry,
            layers,
            params: self.params,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_vectors(n: usize, dim: usize, seed: u64) -> Vec<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn brute_knn(vectors: &[f32], dim: usize, q: &[f32], k: usize) -> Vec<RecordId> {
        let mut all: Vec<ScoredRecord> = vectors
            .chunks(dim)
            .enumerate()
            .map(|(i, v)| ScoredRecord::new(i as RecordId, l2_sq(q, v)))
            .collect();
        all.sort();
        all.into_iter().take(k).map(|r| r.id).collect()
    }

    #[test]
    fn single_node() {
        let g = GraphIndex::build(&[1.0, 2.0], 2, GraphBuildParams::default()).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g.entry_node(), 0);
        assert!(g.neighbors(0).is_empty());
    }

    #[test]
    fn empty_and_bad_params_rejected() {
        assert!(matches!(
            GraphIndex::build(&[], 2, GraphBuildParams::default()),
            Err(CompassError::EmptyDataset)
        ));
        let p = GraphBuildParams { m: 1, ..Default::default() };
        assert!(GraphIndex::build(&[0.0; 4], 2, p).is_err());
        let p = GraphBuildParams { m: 8, efc: 4, seed: 0 };
        assert!(GraphIndex::build(&[0.0; 4], 2, p).is_err());
    }

    #[test]
    fn three_points_complete_at_layer_zero() {
        // Hand enumeration: point 1 links to {0}; point 2 sees both earlier
        // points, which fit under the cap of M = 2, so it links to both and
        // both link back. No list exceeds 2M = 4.
        let v = [0.0, 0.0, 1.0, 0.0, 2.0, 0.0];
        for seed in 0..5 {
            let g = GraphIndex::build(&v, 2, GraphBuildParams { m: 2, efc: 2, seed }).unwrap();
            for node in 0..3u32 {
                let mut nb = g.neighbors(node).to_vec();
                nb.sort();
                let expected: Vec<u32> = (0..3).filter(|&x| x != node).collect();
                assert_eq!(nb, expected, "seed {seed} node {node}");
            }
        }
    }

    #[test]
    fn structural_invariants_and_determinism() {
        let dim = 8;
        let v = random_vectors(2000, dim, 1);
        let params = GraphBuildParams { m: 8, efc: 64, seed: 3 };
        let g = GraphIndex::build(&v, dim, params).unwrap();
        assert_eq!(g, GraphIndex::build(&v, dim, params).unwrap());
        assert_eq!(g.layers()[0].node_count(), 2000);
        for level in 0..g.num_layers() {
            let cap = if level == 0 { 16 } else { 8 };
            for node in g.layer_members(level) {
                let nb = g.neighbors_at(level, node);
                assert!(nb.len() <= cap);
                assert!(!nb.contains(&node));
                assert!(nb.iter().all(|&x| (x as usize) < 2000));
            }
        }
        // upper layers are nested in the ones below
        for level in 1..g.num_layers() {
            let below = g.layer_members(level - 1);
            assert!(g.layer_members(level).iter().all(|x| below.contains(x)));
        }
        // reachability from the entry over layer 0
        let mut seen = vec![false; 2000];
        let mut stack = vec![g.entry_node()];
        seen[g.entry_node() as usize] = true;
        while let Some(x) = stack.pop() {
            for &nb in g.neighbors(x) {
                if !seen[nb as usize] {
                    seen[nb as usize] = true;
                    stack.push(nb);
                }
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn unfiltered_recall_on_10k() {
        let dim = 32;
        let n = 10_000;
        let v = random_vectors(n, dim, 11);
        let g = GraphIndex::build(&v, dim, GraphBuildParams { m: 16, efc: 200, seed: 5 }).unwrap();
        let queries = random_vectors(100, dim, 12);
        let mut hits = 0usize;
        for q in queries.chunks(dim) {
            let truth = brute_knn(&v, dim, q, 10);
            let (found, _) = g.search(&v, dim, q, 10, 100);
            hits += found.iter().filter(|r| truth.contains(&r.id)).count();
        }
        let recall = hits as f64 / 1000.0;
        assert!(recall >= 0.95, "recall {recall}");
    }

    #[test]
    fn entry_point_descent() {
        let dim = 16;
        let n = 10_000;
        let v = random_vectors(n, dim, 21);
        let g = GraphIndex::build(&v, dim, GraphBuildParams { m: 16, efc: 100, seed: 9 }).unwrap();
        assert!(g.num_layers() > 1);
        // Median pairwise distance from a sample of pairs.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut pair_d: Vec<f32> = (0..5000)
            .map(|_| {
                let a = rng.random_range(0..n);
                let b = rng.random_range(0..n);
                l2_sq(&v[a * dim..(a + 1) * dim], &v[b * dim..(b + 1) * dim])
            })
            .collect();
        pair_d.sort_by(f32::total_cmp);
        let median = pair_d[pair_d.len() / 2];
        let queries = random_vectors(100, dim, 22);
        let mut good = 0;
        for q in queries.chunks(dim) {
            let (ep, _) = g.select_entry_point(&v, dim, q);
            let d_ep = l2_sq(q, &v[ep as usize * dim..(ep as usize + 1) * dim]);
            let d_entry = l2_sq(q, &v[g.entry_node() as usize * dim..(g.entry_node() as usize + 1) * dim]);
            assert!(d_ep <= d_entry);
            if d_ep <= median {
                good += 1;
            }
        }
        assert!(good >= 95, "{good}");
        // a query equal to a stored vector never ends farther than the entry
        let (ep, _) = g.select_entry_point(&v, dim, &v[..dim]);
        let d_ep = l2_sq(&v[..dim], &v[ep as usize * dim..(ep as usize + 1) * dim]);
        let d_entry = l2_sq(&v[..dim], &v[g.entry_node() as usize * dim..(g.entry_node() as usize + 1) * dim]);
        assert!(d_ep <= d_entry);
    }

    #[test]
    fn single_layer_entry_is_unchanged() {
        let g = GraphIndex::from_adjacency(vec![vec![1], vec![0]], 2, 1).unwrap();
        assert_eq!(g.select_entry_point(&[0.0, 5.0], 1, &[0.0]), (1, 0));
    }

    #[test]
    fn from_adjacency_validates() {
        assert!(GraphIndex::from_adjacency(vec![vec![0]], 2, 0).is_err());
        assert!(GraphIndex::from_adjacency(vec![vec![3], vec![]], 2, 0).is_err());
        assert!(GraphIndex::from_adjacency(vec![vec![1], vec![]], 2, 5).is_err());
    }
}
