//! Filtered approximate k-nearest-neighbor search under arbitrary range
//! predicates.
//!
//! A [`CompassIndex`] pairs a layered proximity graph over the vectors with
//! IVF-clustered ordered indexes over the attributes. A query walks the
//! graph progressively, adapting its expansion to how many neighbors pass
//! the predicate; when the neighborhood passrate collapses it pulls
//! predicate-passing candidates from the nearest clusters into the shared
//! candidate queue and continues from there.
//!
//! ```no_run
//! use compass::{CompassIndex, IndexParams, Predicate, SearchConfig};
//! # fn demo(dataset: compass::Dataset, q: Vec<f32>) -> compass::Result<()> {
//! let index = CompassIndex::build(dataset, IndexParams::for_size(10_000))?;
//! let p = Predicate::And(vec![Predicate::range(0, 0.2, 0.5), Predicate::range(1, 0.0, 0.3)]);
//! let out = index.search(&q, &p, 10, &SearchConfig::for_k(10, 100))?;
//! println!("{:?}", out.ids());
//! # Ok(()) }
//! ```

pub mod baselines;
pub mod bench;
pub mod bundle;
pub mod clustered;
pub mod error;
pub mod graph;
pub mod model;
pub mod search;
pub mod visit;
pub mod workload;

pub use baselines::{brute_force_filtered_knn, postfilter_search, prefilter_search};
pub use clustered::{ClusterParams, ClusteredBTrees};
pub use error::{CompassError, Result};
pub use graph::{GraphBuildParams, GraphIndex};
pub use model::{recall, recall_at_k, squared_l2, Dataset, FilteredQuery, Predicate, RecordId, Schema, ScoredRecord, SearchConfig};
pub use search::{CompassIndex, IndexParams, QueryOutcome, Variant};
