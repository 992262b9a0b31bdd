//! Filtered top-k search driving the graph and relational iterators over a
//! shared candidate queue.

use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use crate::clustered::{CbtSearchState, ClusterParams, ClusteredBTrees};
use crate::error::{CompassError, Result};
use crate::graph::{GraphBuildParams, GraphIndex, GraphSearchState};
use crate::model::{Dataset, Predicate, ScoredRecord, SearchConfig};
use crate::visit::{RecordView, SharedState};

/// Build parameters of a [`CompassIndex`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexParams {
    pub graph: GraphBuildParams,
    pub clusters: ClusterParams,
}

impl IndexParams {
    /// Defaults: `M = 16`, `efc = 200`, `nlist = ceil(n / 100)`.
    pub fn for_size(n: usize) -> Self {
        Self {
            graph: GraphBuildParams::default(),
            clusters: ClusterParams::new(n.div_ceil(100).max(1), 7),
        }
    }
}

/// Which iterators a search may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Graph traversal with pivots to the clustered indexes.
    Full,
    /// Graph traversal with pivots to a single global index per attribute.
    GraphOnly,
    /// Clustered indexes only.
    RelationalOnly,
}

/// Result of one filtered search.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryOutcome {
    /// Up to `k` records, ascending by `(dist, id)`.
    pub results: Vec<ScoredRecord>,
    /// Record distances computed (one per visited record).
    pub n_dist_comps: u64,
    /// Popcount of the record visited bitmap at the end of the search.
    pub n_visited: u64,
    /// Distances computed for routing: upper graph layers and centroids.
    pub n_routing_comps: u64,
    pub n_predicate_evals: u64,
    /// Calls into the relational iterator.
    pub n_cbt_pulls: u64,
    pub n_one_hop: u64,
    pub n_two_hop: u64,
    pub n_low_sel_breaks: u64,
    pub elapsed: Duration,
}

impl QueryOutcome {
    pub fn ids(&self) -> Vec<u32> {
        self.results.iter().map(|r| r.id).collect()
    }

    /// All distance computations, record-level and routing.
    pub fn total_comps(&self) -> u64 {
        self.n_dist_comps + self.n_routing_comps
    }
}

/// Proximity graph plus clustered attribute indexes over one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct CompassIndex {
    dataset: Dataset,
    graph: GraphIndex,
    cbt: ClusteredBTrees,
    /// nlist = 1 counterpart used by [`Variant::GraphOnly`].
    global: ClusteredBTrees,
    params: IndexParams,
}

impl CompassIndex {
    pub fn build(dataset: Dataset, params: IndexParams) -> Result<Self> {
        if dataset.is_empty() {
            return Err(CompassError::EmptyDataset);
        }
        let graph = GraphIndex::build(dataset.raw_vectors(), dataset.dim(), params.graph)?;
        let cbt = ClusteredBTrees::build(&dataset, params.clusters)?;
        Self::from_parts(dataset, graph, cbt)
    }

    pub fn from_parts(dataset: Dataset, graph: GraphIndex, cbt: ClusteredBTrees) -> Result<Self> {
        if graph.len() != dataset.len() || cbt.len() != dataset.len() || cbt.dim() != dataset.dim() {
            return Err(CompassError::InvalidInput(
                "graph, clustered indexes and dataset disagree on size or dimension".into(),
            ));
        }
        let global = ClusteredBTrees::single(&dataset)?;
        let params = IndexParams {
            graph: graph.params(),
            clusters: cbt.params(),
        };
        Ok(Self {
            dataset,
            graph,
            cbt,
            global,
            params,
        })
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn graph(&self) -> &GraphIndex {
        &self.graph
    }

    pub fn clustered(&self) -> &ClusteredBTrees {
        &self.cbt
    }

    pub fn params(&self) -> IndexParams {
        self.params
    }

    pub fn into_parts(self) -> (Dataset, GraphIndex, ClusteredBTrees) {
        (self.dataset, self.graph, self.cbt)
    }

    pub fn view(&self) -> RecordView<'_> {
        RecordView {
            vectors: self.dataset.raw_vectors(),
            dim: self.dataset.dim(),
            attrs: self.dataset.raw_attributes(),
            m: self.dataset.n_attributes(),
        }
    }

    pub fn search(&self, q: &[f32], p: &Predicate, k: usize, config: &SearchConfig) -> Result<QueryOutcome> {
        self.search_variant(q, p, k, config, Variant::Full)
    }

    pub fn search_variant(
        &self,
        q: &[f32],
        p: &Predicate,
        k: usize,
        config: &SearchConfig,
        variant: Variant,
    ) -> Result<QueryOutcome> {
        self.dataset.check_query_dim(q)?;
        config.validate(k)?;
        p.validate(self.dataset.n_attributes())?;
        let start = Instant::now();
        let view = self.view();
        let mut shared = SharedState::new(self.dataset.len());
        let mut global_top: BinaryHeap<ScoredRecord> = BinaryHeap::new();
        let cbt = match variant {
            Variant::GraphOnly => &self.global,
            _ => &self.cbt,
        };
        let open_relational = || CbtSearchState::open(cbt, view, q, p, k, config);
        let mut graph_stats = Default::default();
        let mut cbt_stats = Default::default();

        if variant == Variant::RelationalOnly {
            let mut relational = open_relational();
            while global_top.len() < config.ef && !relational.exhausted() {
                global_top.extend(relational.next(&mut shared));
            }
            cbt_stats = relational.stats();
        } else {
            let mut graph = GraphSearchState::open(&self.graph, view, q, p, k, config, &mut shared);
            // opened on the first pivot so that searches that never pivot
            // pay no centroid distances
            let mut relational: Option<CbtSearchState<'_>> = None;
            while global_top.len() < config.ef {
                if graph.exhausted(&shared) && relational.as_ref().is_some_and(|r| r.exhausted()) {
                    break;
                }
                let (batch, sel) = graph.next(&mut shared);
                global_top.extend(batch);
                if sel < config.beta {
                    let r = relational.get_or_insert_with(open_relational);
                    global_top.extend(r.next(&mut shared));
                }
            }
            graph_stats = graph.stats();
            if let Some(r) = &relational {
                cbt_stats = r.stats();
            }
        }

        while global_top.len() > k {
            global_top.pop();
        }
        Ok(QueryOutcome {
            results: global_top.into_sorted_vec(),
            n_dist_comps: shared.dist_comps(),
            n_visited: shared.visited_count() as u64,
            n_routing_comps: graph_stats.routing_comps + cbt_stats.centroid_comps,
            n_predicate_evals: graph_stats.predicate_evals + cbt_stats.predicate_evals,
            n_cbt_pulls: cbt_stats.next_calls,
            n_one_hop: graph_stats.one_hop,
            n_two_hop: graph_stats.two_hop,
            n_low_sel_breaks: graph_stats.low_sel_breaks,
            elapsed: start.elapsed(),
        })
    }
}
