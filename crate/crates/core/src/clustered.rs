//! IVF-clustered attribute indexes.
//!
//! Records are partitioned by k-means on their vectors. Inside each cluster
//! every attribute gets an ordered index: a run of `(value, id)` pairs
//! sorted by value then id, range-searched by binary search. The runs of
//! all clusters for one attribute are stored back to back and share a
//! cluster offset directory. A small proximity graph over the centroids
//! ranks clusters by distance to the query on demand.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use fixedbitset::FixedBitSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{CompassError, Result};
use crate::graph::{GraphBuildParams, GraphIndex, GraphSearchState};
use crate::model::{l2_sq, Dataset, Predicate, RecordId, ScoredRecord, SearchConfig};
use crate::visit::{RecordView, SharedState};

pub const CENTROID_GRAPH_M: usize = 16;
pub const CENTROID_GRAPH_EFC: usize = 100;
/// Clusters requested from the centroid graph per expansion step.
pub const CLUSTER_STEP: usize = 8;
pub const DEFAULT_KMEANS_ITERS: usize = 20;

static ALWAYS_TRUE: Predicate = Predicate::True;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClusterParams {
    pub nlist: usize,
    pub seed: u64,
    pub max_iters: usize,
}

impl ClusterParams {
    pub fn new(nlist: usize, seed: u64) -> Self {
        Self {
            nlist,
            seed,
            max_iters: DEFAULT_KMEANS_ITERS,
        }
    }
}

/// Result of k-means: `nlist x dim` centroids and one cluster per record.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub centroids: Vec<f32>,
    pub assignments: Vec<u32>,
    pub iterations: usize,
}

/// k-means with k-means++ seeding and Lloyd iterations until the
/// assignment stops changing or `max_iters` is reached. Empty clusters are
/// re-seeded from the member of the largest cluster farthest from its
/// centroid.
pub fn build_clusters(dataset: &Dataset, params: ClusterParams) -> Result<Clustering> {
    kmeans(dataset.raw_vectors(), dataset.dim(), params)
}

pub(crate) fn kmeans(vectors: &[f32], dim: usize, params: ClusterParams) -> Result<Clustering> {
    let n = vectors.len() / dim;
    let nlist = params.nlist;
    if nlist == 0 || nlist > n {
        return Err(CompassError::InvalidConfig(format!(
            "nlist = {nlist} must be in 1..={n}"
        )));
    }
    let row = |i: usize| &vectors[i * dim..(i + 1) * dim];
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    // k-means++ seeding
    let mut centroids = Vec::with_capacity(nlist * dim);
    let first = rng.random_range(0..n);
    centroids.extend_from_slice(row(first));
    let mut nearest: Vec<f32> = (0..n).map(|i| l2_sq(row(i), row(first))).collect();
    for c in 1..nlist {
        let total: f64 = nearest.iter().map(|&d| d as f64).sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in nearest.iter().enumerate() {
                target -= d as f64;
                if target < 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.extend_from_slice(row(pick));
        let new_c = &centroids[c * dim..(c + 1) * dim];
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(l2_sq(row(i), new_c));
        }
    }

    let mut assignments = vec![u32::MAX; n];
    let mut iterations = 0;
    loop {
        // assignment
        let mut changed = 0usize;
        for (i, slot) in assignments.iter_mut().enumerate() {
            let best = nearest_centroid(&centroids, dim, row(i)).0;
            if *slot != best {
                *slot = best;
                changed += 1;
            }
        }
        if changed == 0 || iterations >= params.max_iters {
            break;
        }
        iterations += 1;
        // update
        let mut sums = vec![0f64; nlist * dim];
        let mut counts = vec![0usize; nlist];
        for (i, &c) in assignments.iter().enumerate() {
            counts[c as usize] += 1;
            for (s, &x) in sums[c as usize * dim..(c as usize + 1) * dim].iter_mut().zip(row(i)) {
                *s += x as f64;
            }
        }
        for c in 0..nlist {
            if counts[c] > 0 {
                for j in 0..dim {
                    centroids[c * dim + j] = (sums[c * dim + j] / counts[c] as f64) as f32;
                }
            }
        }
        repair_empty(vectors, dim, &mut centroids, &mut assignments, &mut counts);
    }
    // The final assignment pass can empty a cluster.
    let mut counts = vec![0usize; nlist];
    assignments.iter().for_each(|&c| counts[c as usize] += 1);
    repair_empty(vectors, dim, &mut centroids, &mut assignments, &mut counts);
    Ok(Clustering {
        centroids,
        assignments,
        iterations,
    })
}

fn nearest_centroid(centroids: &[f32], dim: usize, x: &[f32]) -> (u32, f32) {
    let mut best = (0u32, f32::INFINITY);
    for (c, cv) in centroids.chunks_exact(dim).enumerate() {
        let d = l2_sq(x, cv);
        if d < best.1 {
            best = (c as u32, d);
        }
    }
    best
}

fn repair_empty(vectors: &[f32], dim: usize, centroids: &mut [f32], assignments: &mut [u32], counts: &mut [usize]) {
    let row = |i: usize| &vectors[i * dim..(i + 1) * dim];
    while let Some(empty) = counts.iter().position(|&c| c == 0) {
        let largest = (0..counts.len()).max_by_key(|&c| (counts[c], Reverse(c))).expect("nlist >= 1");
        if counts[largest] < 2 {
            break;
        }
        let lc = &centroids[largest * dim..(largest + 1) * dim];
        let far = assignments
            .iter()
            .enumerate()
            .filter(|(_, &c)| c as usize == largest)
            .map(|(i, _)| (i, l2_sq(row(i), lc)))
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
            .expect("largest cluster is non-empty")
            .0;
        centroids[empty * dim..(empty + 1) * dim].copy_from_slice(row(far));
        assignments[far] = empty as u32;
        counts[largest] -= 1;
        counts[empty] = 1;
    }
}

/// How a predicate is answered from one cluster's ordered indexes.
#[derive(Debug, Clone, PartialEq)]
pub enum ScanPlan {
    /// Every member of the cluster.
    Full,
    /// One range on one attribute index.
    Range { attr: usize, lo: f64, hi: f64 },
    /// Deduplicated union of several plans.
    Union(Vec<ScanPlan>),
}

impl ScanPlan {
    /// A conjunction is driven by its first indexable conjunct; a
    /// disjunction scans every branch and merges.
    pub fn for_predicate(p: &Predicate) -> Self {
        match p {
            Predicate::True => ScanPlan::Full,
            Predicate::Range { attr, lo, hi } => ScanPlan::Range {
                attr: *attr,
                lo: *lo,
                hi: *hi,
            },
            Predicate::And(children) => children
                .iter()
                .map(Self::for_predicate)
                .find(|plan| *plan != ScanPlan::Full)
                .unwrap_or(ScanPlan::Full),
            Predicate::Or(children) => {
                let plans: Vec<_> = children.iter().map(Self::for_predicate).collect();
                if plans.contains(&ScanPlan::Full) {
                    ScanPlan::Full
                } else if plans.len() == 1 {
                    plans.into_iter().next().expect("one plan")
                } else {
                    ScanPlan::Union(plans)
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusteredBTrees {
    n: usize,
    dim: usize,
    m: usize,
    nlist: usize,
    centroids: Vec<f32>,
    assignments: Vec<u32>,
    /// `nlist + 1` offsets into each attribute's runs and into `members`.
    offsets: Vec<u64>,
    /// Cluster members in id order, grouped by cluster.
    members: Vec<RecordId>,
    /// `m` blocks of `n` values each; within a block clusters are laid out
    /// per `offsets` and each cluster's slice is sorted.
    run_values: Vec<f64>,
    run_ids: Vec<RecordId>,
    centroid_graph: GraphIndex,
    params: ClusterParams,
}

impl ClusteredBTrees {
    pub fn build(dataset: &Dataset, params: ClusterParams) -> Result<Self> {
        let clustering = build_clusters(dataset, params)?;
        Self::from_clustering(dataset, clustering.centroids, clustering.assignments, params)
    }

    /// Indexes a dataset under a given partition.
    pub fn from_clustering(dataset: &Dataset, centroids: Vec<f32>, assignments: Vec<u32>, params: ClusterParams) -> Result<Self> {
        let n = dataset.len();
        let dim = dataset.dim();
        let nlist = params.nlist;
        if centroids.len() != nlist * dim {
            return Err(CompassError::InvalidInput(format!(
                "expected {nlist} centroids of dim {dim}"
            )));
        }
        if assignments.len() != n {
            return Err(CompassError::InvalidInput(format!(
                "{} assignments for {n} records",
                assignments.len()
            )));
        }
        if let Some(&bad) = assignments.iter().find(|&&c| c as usize >= nlist) {
            return Err(CompassError::InvalidCluster { cluster: bad as usize, nlist });
        }
        let (offsets, members, run_values, run_ids) = build_cluster_trees(dataset, &assignments, nlist);
        let centroid_graph = build_centroid_graph(&centroids, dim, params.seed)?;
        Ok(Self {
            n,
            dim,
            m: dataset.n_attributes(),
            nlist,
            centroids,
            assignments,
            offsets,
            members,
            run_values,
            run_ids,
            centroid_graph,
            params,
        })
    }

    /// Single-cluster index: one global ordered index per attribute.
    pub fn single(dataset: &Dataset) -> Result<Self> {
        let clustering = kmeans(dataset.raw_vectors(), dataset.dim(), ClusterParams::new(1, 0))?;
        Self::from_clustering(dataset, clustering.centroids, clustering.assignments, ClusterParams::new(1, 0))
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_raw(
        n: usize,
        dim: usize,
        m: usize,
        centroids: Vec<f32>,
        assignments: Vec<u32>,
        offsets: Vec<u64>,
        members: Vec<RecordId>,
        run_values: Vec<f64>,
        run_ids: Vec<RecordId>,
        centroid_graph: GraphIndex,
        params: ClusterParams,
    ) -> Self {
        Self {
            n,
            dim,
            m,
            nlist: params.nlist,
            centroids,
            assignments,
            offsets,
            members,
            run_values,
            run_ids,
            centroid_graph,
            params,
        }
    }

    pub fn nlist(&self) -> usize {
        self.nlist
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_attributes(&self) -> usize {
        self.m
    }

    pub fn params(&self) -> ClusterParams {
        self.params
    }

    pub fn centroids(&self) -> &[f32] {
        &self.centroids
    }

    pub fn centroid(&self, c: usize) -> &[f32] {
        &self.centroids[c * self.dim..(c + 1) * self.dim]
    }

    pub fn assignments(&self) -> &[u32] {
        &self.assignments
    }

    pub fn centroid_graph(&self) -> &GraphIndex {
        &self.centroid_graph
    }

    pub(crate) fn offsets(&self) -> &[u64] {
        &self.offsets
    }

    pub(crate) fn members_raw(&self) -> &[RecordId] {
        &self.members
    }

    pub(crate) fn runs_raw(&self) -> (&[f64], &[RecordId]) {
        (&self.run_values, &self.run_ids)
    }

    pub fn cluster_size(&self, c: usize) -> usize {
        (self.offsets[c + 1] - self.offsets[c]) as usize
    }

    pub fn members(&self, c: usize) -> &[RecordId] {
        &self.members[self.offsets[c] as usize..self.offsets[c + 1] as usize]
    }

    fn run_bounds(&self, c: usize, attr: usize) -> (usize, usize) {
        let base = attr * self.n;
        (base + self.offsets[c] as usize, base + self.offsets[c + 1] as usize)
    }

    /// The sorted `(value, id)` run of attribute `attr` in cluster `c`.
    pub fn tree(&self, c: usize, attr: usize) -> impl Iterator<Item = (f64, RecordId)> + '_ {
        let (s, e) = self.run_bounds(c, attr);
        self.run_values[s..e].iter().copied().zip(self.run_ids[s..e].iter().copied())
    }

    /// Positions `[start, end)` of the run entries with value in `[lo, hi]`.
    fn range_positions(&self, c: usize, attr: usize, lo: f64, hi: f64) -> (usize, usize) {
        let (s, e) = self.run_bounds(c, attr);
        let values = &self.run_values[s..e];
        let a = values.partition_point(|&v| v < lo);
        let b = values.partition_point(|&v| v <= hi);
        (s + a, s + b.max(a))
    }

    /// Opens the index scan of cluster `c` for predicate `p`. The scan
    /// yields every cluster member passing `p` exactly once.
    pub fn cluster_range_scan(&self, c: usize, p: &Predicate) -> Result<ClusterScan> {
        if c >= self.nlist {
            return Err(CompassError::InvalidCluster { cluster: c, nlist: self.nlist });
        }
        p.validate(self.m)?;
        Ok(self.open_scan(c, &ScanPlan::for_predicate(p)))
    }

    fn open_scan(&self, c: usize, plan: &ScanPlan) -> ClusterScan {
        match plan {
            ScanPlan::Full => {
                let s = self.offsets[c] as usize;
                let e = self.offsets[c + 1] as usize;
                ClusterScan::Members { pos: s, end: e }
            }
            ScanPlan::Range { attr, lo, hi } => {
                let (pos, end) = self.range_positions(c, *attr, *lo, *hi);
                ClusterScan::Run { pos, end }
            }
            ScanPlan::Union(_) => {
                let mut ids = Vec::new();
                self.collect_plan(c, plan, &mut ids);
                ids.sort_unstable();
                ids.dedup();
                ClusterScan::List { ids, pos: 0 }
            }
        }
    }

    fn collect_plan(&self, c: usize, plan: &ScanPlan, out: &mut Vec<RecordId>) {
        match plan {
            ScanPlan::Full => out.extend_from_slice(self.members(c)),
            ScanPlan::Range { attr, lo, hi } => {
                let (s, e) = self.range_positions(c, *attr, *lo, *hi);
                out.extend_from_slice(&self.run_ids[s..e]);
            }
            ScanPlan::Union(plans) => plans.iter().for_each(|p| self.collect_plan(c, p, out)),
        }
    }
}

/// Builds the per-cluster member lists and ordered attribute runs.
/// Returns `(offsets, members, run_values, run_ids)`.
pub fn build_cluster_trees(dataset: &Dataset, assignments: &[u32], nlist: usize) -> (Vec<u64>, Vec<RecordId>, Vec<f64>, Vec<RecordId>) {
    let n = dataset.len();
    let m = dataset.n_attributes();
    let mut counts = vec![0u64; nlist];
    assignments.iter().for_each(|&c| counts[c as usize] += 1);
    let mut offsets = Vec::with_capacity(nlist + 1);
    offsets.push(0u64);
    for c in &counts {
        offsets.push(offsets.last().expect("non-empty") + c);
    }
    let mut members = vec![0 as RecordId; n];
    let mut cursor: Vec<u64> = offsets[..nlist].to_vec();
    for (id, &c) in assignments.iter().enumerate() {
        members[cursor[c as usize] as usize] = id as RecordId;
        cursor[c as usize] += 1;
    }
    let mut run_values = Vec::with_capacity(n * m);
    let mut run_ids = Vec::with_capacity(n * m);
    let mut entries: Vec<(f64, RecordId)> = Vec::new();
    for attr in 0..m {
        for c in 0..nlist {
            let slice = &members[offsets[c] as usize..offsets[c + 1] as usize];
            entries.clear();
            entries.extend(slice.iter().map(|&id| (dataset.attributes(id)[attr], id)));
            entries.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            run_values.extend(entries.iter().map(|e| e.0));
            run_ids.extend(entries.iter().map(|e| e.1));
        }
    }
    (offsets, members, run_values, run_ids)
}

/// Proximity graph over the centroids.
pub fn build_centroid_graph(centroids: &[f32], dim: usize, seed: u64) -> Result<GraphIndex> {
    GraphIndex::build(
        centroids,
        dim,
        GraphBuildParams {
            m: CENTROID_GRAPH_M,
            efc: CENTROID_GRAPH_EFC,
            seed,
        },
    )
}

/// Cursor over one cluster's qualifying records.
#[derive(Debug, Clone, PartialEq)]
pub enum ClusterScan {
    Run { pos: usize, end: usize },
    Members { pos: usize, end: usize },
    List { ids: Vec<RecordId>, pos: usize },
    Done,
}

impl ClusterScan {
    /// Next candidate id from the index, before residual filtering.
    fn advance(&mut self, cbt: &ClusteredBTrees) -> Option<RecordId> {
        match self {
            ClusterScan::Run { pos, end } if *pos < *end => {
                *pos += 1;
                Some(cbt.run_ids[*pos - 1])
            }
            ClusterScan::Members { pos, end } if *pos < *end => {
                *pos += 1;
                Some(cbt.members[*pos - 1])
            }
            ClusterScan::List { ids, pos } if *pos < ids.len() => {
                *pos += 1;
                Some(ids[*pos - 1])
            }
            _ => None,
        }
    }

    /// Next member passing `p`; every candidate is re-checked against the
    /// full predicate. `evals` counts predicate evaluations.
    pub fn next_passing(&mut self, cbt: &ClusteredBTrees, p: &Predicate, attrs: &RecordView<'_>, evals: &mut u64) -> Option<RecordId> {
        while let Some(id) = self.advance(cbt) {
            *evals += 1;
            if p.matches(attrs.attrs(id)) {
                return Some(id);
            }
        }
        *self = ClusterScan::Done;
        None
    }

    /// Drains the scan into a vector.
    pub fn collect_all(mut self, cbt: &ClusteredBTrees, p: &Predicate, attrs: &RecordView<'_>) -> Vec<RecordId> {
        let mut evals = 0;
        std::iter::from_fn(|| self.next_passing(cbt, p, attrs, &mut evals)).collect()
    }
}

/// Work counters of one relational iterator.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CbtStats {
    pub predicate_evals: u64,
    pub centroid_comps: u64,
    pub next_calls: u64,
    pub clusters_opened: u64,
}

/// Relational candidate proposer: walks clusters nearest-first and fetches
/// unvisited predicate-passing records through the cluster indexes.
#[derive(Debug)]
pub struct CbtSearchState<'a> {
    cbt: &'a ClusteredBTrees,
    view: RecordView<'a>,
    query: &'a [f32],
    predicate: &'a Predicate,
    plan: ScanPlan,
    batch: usize,
    efi: usize,
    relational: BinaryHeap<Reverse<ScoredRecord>>,
    cluster_iter: GraphSearchState<'a>,
    cluster_shared: SharedState,
    pending_clusters: VecDeque<u32>,
    consumed: FixedBitSet,
    n_consumed: usize,
    scan: ClusterScan,
    stats: CbtStats,
}

impl<'a> CbtSearchState<'a> {
    /// `k` is the query's result count; each call returns up to `ceil(k/2)`.
    pub fn open(
        cbt: &'a ClusteredBTrees,
        view: RecordView<'a>,
        query: &'a [f32],
        predicate: &'a Predicate,
        k: usize,
        config: &SearchConfig,
    ) -> Self {
        let centroid_view = RecordView {
            vectors: &cbt.centroids,
            dim: cbt.dim,
            attrs: &[],
            m: 0,
        };
        let cluster_config = SearchConfig {
            delta_efs: CLUSTER_STEP,
            ..*config
        };
        let mut cluster_shared = SharedState::new(cbt.nlist);
        let cluster_iter = GraphSearchState::open(
            &cbt.centroid_graph,
            centroid_view,
            query,
            &ALWAYS_TRUE,
            CLUSTER_STEP,
            &cluster_config,
            &mut cluster_shared,
        );
        Self {
            cbt,
            view,
            query,
            predicate,
            plan: ScanPlan::for_predicate(predicate),
            batch: k.div_ceil(2).max(1),
            efi: config.efi.max(1),
            relational: BinaryHeap::new(),
            cluster_iter,
            cluster_shared,
            pending_clusters: VecDeque::new(),
            consumed: FixedBitSet::with_capacity(cbt.nlist),
            n_consumed: 0,
            scan: ClusterScan::Done,
            stats: CbtStats::default(),
        }
    }

    pub fn stats(&self) -> CbtStats {
        let mut s = self.stats;
        s.centroid_comps += self.cluster_shared.dist_comps() + self.cluster_iter.stats().routing_comps;
        s
    }

    pub fn clusters_consumed(&self) -> usize {
        self.n_consumed
    }

    /// Whether cluster `c` has been opened.
    pub fn is_consumed(&self, c: usize) -> bool {
        self.consumed.contains(c)
    }

    pub fn relational_len(&self) -> usize {
        self.relational.len()
    }

    /// Visited bitmap of the private centroid-graph traversal.
    pub fn cluster_visited(&self) -> &FixedBitSet {
        self.cluster_shared.visited()
    }

    pub fn exhausted(&self) -> bool {
        self.n_consumed == self.cbt.nlist && self.scan == ClusterScan::Done && self.relational.is_empty()
    }

    /// Next-nearest unconsumed cluster, if any remain.
    fn next_cluster(&mut self) -> Option<u32> {
        loop {
            while let Some(c) = self.pending_clusters.pop_front() {
                if !self.consumed.contains(c as usize) {
                    return Some(c);
                }
            }
            if self.n_consumed == self.cbt.nlist {
                return None;
            }
            if self.cluster_iter.exhausted(&self.cluster_shared) {
                // The traversal could not reach every centroid; rank the
                // rest by linear scan.
                let mut rest: Vec<ScoredRecord> = (0..self.cbt.nlist)
                    .filter(|&c| !self.consumed.contains(c) && !self.cluster_shared.is_visited(c as u32))
                    .map(|c| ScoredRecord::new(c as u32, l2_sq(self.query, self.cbt.centroid(c))))
                    .collect();
                self.stats.centroid_comps += rest.len() as u64;
                rest.sort();
                self.pending_clusters.extend(rest.iter().map(|r| r.id));
                if self.pending_clusters.is_empty() {
                    return None;
                }
                continue;
            }
            let (batch, _) = self.cluster_iter.next(&mut self.cluster_shared);
            self.pending_clusters.extend(batch.iter().map(|r| r.id));
        }
    }

    /// Fetches up to `efi` new passing records into the relational queue,
    /// then moves the nearest `ceil(k/2)` of them onto the shared candidate
    /// queue and returns them.
    pub fn next(&mut self, shared: &mut SharedState) -> Vec<ScoredRecord> {
        self.stats.next_calls += 1;
        let mut added = 0usize;
        while added < self.efi {
            match self.scan.next_passing(self.cbt, self.predicate, &self.view, &mut self.stats.predicate_evals) {
                Some(id) => {
                    if !shared.is_visited(id) {
                        let dist = shared.visit(id, self.query, &self.view);
                        self.relational.push(Reverse(ScoredRecord::new(id, dist)));
                        added += 1;
                    }
                }
                None => match self.next_cluster() {
                    Some(c) => {
                        self.consumed.insert(c as usize);
                        self.n_consumed += 1;
                        self.stats.clusters_opened += 1;
                        self.scan = self.cbt.open_scan(c as usize, &self.plan);
                    }
                    None => break,
                },
            }
        }
        let mut out = Vec::with_capacity(self.batch);
        while out.len() < self.batch {
            let Some(Reverse(rec)) = self.relational.pop() else {
                break;
            };
            shared.push_candidate(rec);
            out.push(rec);
        }
        out
    }
}
