//! On-disk index bundles and cached ground truth.
//!
//! A bundle is a fixed header followed by framed sections. Every integer and
//! real is little-endian and fixed-width. Each section is a one-byte tag, a
//! `u64` payload length and the payload, so section sizes sum to the file
//! size minus the header.
//!
//! | section           | payload                                                   |
//! |-------------------|-----------------------------------------------------------|
//! | `graph`           | entry, layer count, per layer: nodes, CSR offsets, ids    |
//! | `centroids`       | `nlist * d` f32, row-major                                |
//! | `assignments`     | `n` u32 cluster ids                                       |
//! | `members`         | offset directory (`nlist + 1` u64), `n` member ids         |
//! | `tree[a]`         | for attribute `a`: `n` f64 values then `n` u32 ids         |
//! | `centroid_graph`  | graph build params, then the same layout as `graph`       |
//!
//! The vectors and attributes are not stored; the header carries a SHA-256
//! of the dataset and loading checks it.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::clustered::{ClusterParams, ClusteredBTrees};
use crate::error::{CompassError, Result};
use crate::graph::{GraphBuildParams, GraphIndex, Layer};
use crate::model::{Dataset, FilteredQuery, RecordId, ScoredRecord};
use crate::search::CompassIndex;

pub const FORMAT_VERSION: u8 = 1;
const BUNDLE_MAGIC: &[u8; 4] = b"CMPX";
const TRUTH_MAGIC: &[u8; 4] = b"CMPG";
/// magic, version, hash, d, n, m, M, efc, graph seed, nlist, cluster seed,
/// k-means iterations, section count
pub const HEADER_LEN: usize = 4 + 1 + 32 + 8 * 3 + 8 * 3 + 8 * 3 + 4;

pub type Hash = [u8; 32];

/// SHA-256 over the shape, vector bits and attribute bits of a dataset.
pub fn dataset_hash(ds: &Dataset) -> Hash {
    let mut h = Sha256::new();
    h.update(b"compass-dataset\0");
    for v in [ds.dim(), ds.len(), ds.n_attributes()] {
        h.update((v as u64).to_le_bytes());
    }
    for x in ds.raw_vectors() {
        h.update(x.to_le_bytes());
    }
    for x in ds.raw_attributes() {
        h.update(x.to_le_bytes());
    }
    h.finalize().into()
}

/// SHA-256 over every query's `k`, predicate and vector bits, in order.
pub fn workload_hash(queries: &[FilteredQuery]) -> Hash {
    let mut h = Sha256::new();
    h.update(b"compass-workload\0");
    for q in queries {
        h.update((q.k as u64).to_le_bytes());
        let p = q.predicate.to_json().to_string();
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
        h.update((q.vector.len() as u64).to_le_bytes());
        for x in &q.vector {
            h.update(x.to_le_bytes());
        }
    }
    h.finalize().into()
}

pub fn hex(hash: &Hash) -> String {
    hash.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BundleHeader {
    pub format_version: u8,
    pub dataset_hash: Hash,
    pub d: u64,
    pub n: u64,
    pub m: u64,
    pub graph: GraphBuildParams,
    pub clusters: ClusterParams,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SectionSize {
    pub name: String,
    /// Tag, length prefix and payload.
    pub bytes: u64,
}

/// A persisted [`CompassIndex`] minus its dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexBundle {
    pub header: BundleHeader,
    graph: GraphIndex,
    cbt: ClusteredBTrees,
}

#[repr(u8)]
#[derive(Clone, Copy)]
enum Tag {
    Graph = 1,
    Centroids = 2,
    Assignments = 3,
    Members = 4,
    Tree = 5,
    CentroidGraph = 6,
}

impl IndexBundle {
    pub fn from_index(index: &CompassIndex) -> Self {
        let ds = index.dataset();
        Self {
            header: BundleHeader {
                format_version: FORMAT_VERSION,
                dataset_hash: dataset_hash(ds),
                d: ds.dim() as u64,
                n: ds.len() as u64,
                m: ds.n_attributes() as u64,
                graph: index.graph().params(),
                clusters: index.clustered().params(),
            },
            graph: index.graph().clone(),
            cbt: index.clustered().clone(),
        }
    }

    /// Rejoins the bundle with its dataset; the dataset hash must match.
    pub fn into_index(self, dataset: Dataset) -> Result<CompassIndex> {
        let got = dataset_hash(&dataset);
        if got != self.header.dataset_hash {
            return Err(CompassError::HashMismatch(format!(
                "bundle was built for dataset {}, got {}",
                hex(&self.header.dataset_hash),
                hex(&got)
            )));
        }
        CompassIndex::from_parts(dataset, self.graph, self.cbt)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.encode().0
    }

    pub fn section_sizes(&self) -> Vec<SectionSize> {
        self.encode().1
    }

    fn encode(&self) -> (Vec<u8>, Vec<SectionSize>) {
        let h = &self.header;
        let mut out = Vec::new();
        out.extend_from_slice(BUNDLE_MAGIC);
        out.push(h.format_version);
        out.extend_from_slice(&h.dataset_hash);
        for v in [h.d, h.n, h.m] {
            put_u64(&mut out, v);
        }
        put_u64(&mut out, h.graph.m as u64);
        put_u64(&mut out, h.graph.efc as u64);
        put_u64(&mut out, h.graph.seed);
        put_u64(&mut out, h.clusters.nlist as u64);
        put_u64(&mut out, h.clusters.seed);
        put_u64(&mut out, h.clusters.max_iters as u64);
        let m = h.m as usize;
        put_u32(&mut out, (5 + m) as u32);
        debug_assert_eq!(out.len(), HEADER_LEN);

        let mut sizes = Vec::new();
        let mut section = |out: &mut Vec<u8>, tag: Tag, name: String, payload: Vec<u8>| {
            out.push(tag as u8);
            put_u64(out, payload.len() as u64);
            out.extend_from_slice(&payload);
            sizes.push(SectionSize {
                name,
                bytes: 9 + payload.len() as u64,
            });
        };

        let mut p = Vec::new();
        encode_graph(&mut p, &self.graph);
        section(&mut out, Tag::Graph, "graph".into(), p);

        let mut p = Vec::new();
        self.cbt.centroids().iter().for_each(|x| p.extend_from_slice(&x.to_le_bytes()));
        section(&mut out, Tag::Centroids, "centroids".into(), p);

        let mut p = Vec::new();
        self.cbt.assignments().iter().for_each(|&c| put_u32(&mut p, c));
        section(&mut out, Tag::Assignments, "assignments".into(), p);

        let mut p = Vec::new();
        self.cbt.offsets().iter().for_each(|&o| put_u64(&mut p, o));
        self.cbt.members_raw().iter().for_each(|&id| put_u32(&mut p, id));
        section(&mut out, Tag::Members, "members".into(), p);

        let n = h.n as usize;
        let (values, ids) = self.cbt.runs_raw();
        for a in 0..m {
            let mut p = Vec::with_capacity(12 * n);
            values[a * n..(a + 1) * n].iter().for_each(|v| p.extend_from_slice(&v.to_le_bytes()));
            ids[a * n..(a + 1) * n].iter().for_each(|&id| put_u32(&mut p, id));
            section(&mut out, Tag::Tree, format!("tree[{a}]"), p);
        }

        let mut p = Vec::new();
        let cg = self.cbt.centroid_graph();
        put_u64(&mut p, cg.params().m as u64);
        put_u64(&mut p, cg.params().efc as u64);
        put_u64(&mut p, cg.params().seed);
        encode_graph(&mut p, cg);
        section(&mut out, Tag::CentroidGraph, "centroid_graph".into(), p);

        (out, sizes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != BUNDLE_MAGIC {
            return Err(r.err(0, "not an index bundle"));
        }
        let format_version = r.u8()?;
        if format_version != FORMAT_VERSION {
            return Err(r.err(4, &format!("format version {format_version}, expected {FORMAT_VERSION}")));
        }
        let dataset_hash: Hash = r.take(32)?.try_into().expect("32 bytes");
        let (d, n, m) = (r.u64()?, r.u64()?, r.u64()?);
        let graph = GraphBuildParams {
            m: r.usize()?,
            efc: r.usize()?,
            seed: r.u64()?,
        };
        let clusters = ClusterParams {
            nlist: r.usize()?,
            seed: r.u64()?,
            max_iters: r.usize()?,
        };
        let n_sections = r.u32()? as u64;
        if n_sections != 5 + m {
            return Err(r.err(HEADER_LEN as u64 - 4, "section count does not match attribute count"));
        }
        let (du, nu, mu, nlist) = (d as usize, n as usize, m as usize, clusters.nlist);
        if du == 0 || nu == 0 || nlist == 0 || nlist > nu {
            return Err(r.err(37, "invalid dimensions in header"));
        }

        let mut s = r.section(Tag::Graph)?;
        let g = decode_graph(&mut s, nu, graph)?;
        s.finish()?;

        let mut s = r.section(Tag::Centroids)?;
        let centroids = s.f32s(nlist * du)?;
        s.finish()?;

        let mut s = r.section(Tag::Assignments)?;
        let assignments = s.u32s(nu)?;
        if assignments.iter().any(|&c| c as usize >= nlist) {
            return Err(s.err(s.start, "cluster id out of range"));
        }
        s.finish()?;

        let mut s = r.section(Tag::Members)?;
        let offsets = s.u64s(nlist + 1)?;
        if offsets[0] != 0 || offsets[nlist] != n || offsets.windows(2).any(|w| w[0] > w[1]) {
            return Err(s.err(s.start, "malformed offset directory"));
        }
        let members = s.ids(nu, nu)?;
        s.finish()?;

        let mut run_values = Vec::with_capacity(nu * mu);
        let mut run_ids = Vec::with_capacity(nu * mu);
        for _ in 0..mu {
            let mut s = r.section(Tag::Tree)?;
            run_values.extend(s.f64s(nu)?);
            run_ids.extend(s.ids(nu, nu)?);
            s.finish()?;
        }

        let mut s = r.section(Tag::CentroidGraph)?;
        let cparams = GraphBuildParams {
            m: s.usize()?,
            efc: s.usize()?,
            seed: s.u64()?,
        };
        let centroid_graph = decode_graph(&mut s, nlist, cparams)?;
        s.finish()?;
        if r.pos != bytes.len() {
            return Err(r.err(r.pos as u64, "trailing bytes after last section"));
        }

        let cbt = ClusteredBTrees::from_raw(
            nu,
            du,
            mu,
            centroids,
            assignments,
            offsets,
            members,
            run_values,
            run_ids,
            centroid_graph,
            clusters,
        );
        Ok(Self {
            header: BundleHeader {
                format_version,
                dataset_hash,
                d,
                n,
                m,
                graph,
                clusters,
            },
            graph: g,
            cbt,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

fn encode_graph(out: &mut Vec<u8>, g: &GraphIndex) {
    put_u32(out, g.entry_node());
    put_u32(out, g.num_layers() as u32);
    for layer in g.layers() {
        put_u64(out, layer.nodes.len() as u64);
        layer.nodes.iter().for_each(|&x| put_u32(out, x));
        put_u64(out, layer.neighbors.len() as u64);
        layer.offsets.iter().for_each(|&o| put_u64(out, o));
        layer.neighbors.iter().for_each(|&x| put_u32(out, x));
    }
}

fn decode_graph(s: &mut Reader<'_>, n: usize, params: GraphBuildParams) -> Result<GraphIndex> {
    let at = s.pos as u64;
    let entry = s.u32()?;
    let n_layers = s.u32()? as usize;
    if (entry as usize) >= n || n_layers == 0 {
        return Err(s.err(at, "invalid graph entry or layer count"));
    }
    let mut layers = Vec::with_capacity(n_layers);
    for level in 0..n_layers {
        let at = s.pos as u64;
        let n_nodes = s.u64()? as usize;
        let nodes = s.ids(n_nodes, n)?;
        let rows = if level == 0 { n } else { n_nodes };
        if (level == 0 && n_nodes != 0) || nodes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(s.err(at, "malformed layer membership"));
        }
        let n_edges = s.u64()? as usize;
        let offsets = s.u64s(rows + 1)?;
        if offsets[0] != 0 || offsets[rows] as usize != n_edges || offsets.windows(2).any(|w| w[0] > w[1]) {
            return Err(s.err(at, "malformed CSR offsets"));
        }
        let neighbors = s.ids(n_edges, n)?;
        layers.push(Layer {
            nodes,
            offsets,
            neighbors,
        });
    }
    Ok(GraphIndex::from_raw(n, entry, layers, params))
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn err(&self, offset: u64, msg: &str) -> CompassError {
        CompassError::Format {
            offset,
            msg: msg.to_owned(),
        }
    }

    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < len {
            return Err(self.err(self.pos as u64, &format!("truncated: need {len} bytes")));
        }
        let s = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("sized"))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        self.array().map(u32::from_le_bytes)
    }

    fn u64(&mut self) -> Result<u64> {
        self.array().map(u64::from_le_bytes)
    }

    fn usize(&mut self) -> Result<usize> {
        let at = self.pos as u64;
        usize::try_from(self.u64()?).map_err(|_| self.err(at, "value exceeds usize"))
    }

    fn checked_len(&self, count: usize, width: usize) -> Result<usize> {
        count
            .checked_mul(width)
            .filter(|&l| l <= self.bytes.len() - self.pos)
            .ok_or_else(|| self.err(self.pos as u64, &format!("truncated: need {count} items")))
    }

    fn u32s(&mut self, count: usize) -> Result<Vec<u32>> {
        let len = self.checked_len(count, 4)?;
        Ok(self.take(len)?.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().expect("4"))).collect())
    }

    fn u64s(&mut self, count: usize) -> Result<Vec<u64>> {
        let len = self.checked_len(count, 8)?;
        Ok(self.take(len)?.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().expect("8"))).collect())
    }

    fn f32s(&mut self, count: usize) -> Result<Vec<f32>> {
        Ok(self.u32s(count)?.into_iter().map(f32::from_bits).collect())
    }

    fn f64s(&mut self, count: usize) -> Result<Vec<f64>> {
        Ok(self.u64s(count)?.into_iter().map(f64::from_bits).collect())
    }

    /// `count` record ids, each below `bound`.
    fn ids(&mut self, count: usize, bound: usize) -> Result<Vec<RecordId>> {
        let at = self.pos as u64;
        let ids = self.u32s(count)?;
        if ids.iter().any(|&x| x as usize >= bound) {
            return Err(self.err(at, "record id out of range"));
        }
        Ok(ids)
    }

    /// Splits off the next section, checking its tag.
    fn section(&mut self, tag: Tag) -> Result<Section<'a>> {
        let at = self.pos as u64;
        let got = self.u8()?;
        if got != tag as u8 {
            return Err(self.err(at, &format!("expected section tag {}, found {got}", tag as u8)));
        }
        let len = self.usize()?;
        let start = self.pos;
        let body = self.take(len)?;
        Ok(Section {
            inner: Reader {
                bytes: &self.bytes[..start + body.len()],
                pos: start,
            },
            start: start as u64,
        })
    }
}

struct Section<'a> {
    inner: Reader<'a>,
    start: u64,
}

impl Section<'_> {
    fn finish(self) -> Result<()> {
        if self.inner.pos != self.inner.bytes.len() {
            return Err(self.inner.err(self.inner.pos as u64, "section length does not match its contents"));
        }
        Ok(())
    }
}

impl<'a> std::ops::Deref for Section<'a> {
    type Target = Reader<'a>;
    fn deref(&self) -> &Reader<'a> {
        &self.inner
    }
}

impl std::ops::DerefMut for Section<'_> {
    fn deref_mut(&mut self) -> &mut Self::Target {
        &mut self.inner
    }
}

/// Exact filtered top-k per query, bound to the dataset and workload it was
/// computed from. Rows may be shorter than `k` when fewer records pass.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub dataset_hash: Hash,
    pub workload_hash: Hash,
    pub k: usize,
    pub rows: Vec<Vec<ScoredRecord>>,
}

impl GroundTruth {
    pub fn compute(dataset: &Dataset, queries: &[FilteredQuery], k: usize) -> Self {
        let rows = queries
            .iter()
            .map(|q| crate::baselines::brute_force_filtered_knn(dataset, &q.vector, &q.predicate, k))
            .collect();
        Self {
            dataset_hash: dataset_hash(dataset),
            workload_hash: workload_hash(queries),
            k,
            rows,
        }
    }

    /// Errors unless this truth was computed for exactly these inputs.
    pub fn check_binding(&self, dataset: &Dataset, queries: &[FilteredQuery], k: usize) -> Result<()> {
        if self.dataset_hash != dataset_hash(dataset) {
            return Err(CompassError::HashMismatch("ground truth was computed on a different dataset".into()));
        }
        if self.workload_hash != workload_hash(queries) {
            return Err(CompassError::HashMismatch("ground truth was computed for a different workload".into()));
        }
        if self.k != k {
            return Err(CompassError::HashMismatch(format!("ground truth has k = {}, requested {k}", self.k)));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(TRUTH_MAGIC);
        out.push(FORMAT_VERSION);
        out.extend_from_slice(&self.dataset_hash);
        out.extend_from_slice(&self.workload_hash);
        put_u32(&mut out, self.k as u32);
        put_u32(&mut out, self.rows.len() as u32);
        for row in &self.rows {
            put_u32(&mut out, row.len() as u32);
            for r in row {
                put_u32(&mut out, r.id);
                out.extend_from_slice(&r.dist.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != TRUTH_MAGIC {
            return Err(r.err(0, "not a ground-truth file"));
        }
        let version = r.u8()?;
        if version != FORMAT_VERSION {
            return Err(r.err(4, &format!("format version {version}, expected {FORMAT_VERSION}")));
        }
        let dataset_hash = r.array::<32>()?;
        let workload_hash = r.array::<32>()?;
        let k = r.u32()? as usize;
        let nq = r.u32()? as usize;
        let mut rows = Vec::with_capacity(nq.min(1 << 20));
        for _ in 0..nq {
            let at = r.pos as u64;
            let len = r.u32()? as usize;
            if len > k {
                return Err(r.err(at, "row longer than k"));
            }
            let raw = r.u32s(2 * len)?;
            rows.push(raw.chunks_exact(2).map(|c| ScoredRecord::new(c[0], f32::from_bits(c[1]))).collect());
        }
        if r.pos != bytes.len() {
            return Err(r.err(r.pos as u64, "trailing bytes"));
        }
        Ok(Self {
            dataset_hash,
            workload_hash,
            k,
            rows,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}
