//! Dataset ingest and workload generation.
//!
//! File formats:
//! - `.fvecs` / `.ivecs`: per record a little-endian `i32` dimension followed
//!   by that many little-endian `f32` (or `i32`) values.
//! - attribute CSV: a header row of attribute names, then one row of values
//!   per record.
//! - workload JSON lines: an optional first line `{"meta": {...}}`, then one
//!   query per line, `{"k": 10, "predicate": {...}, "vector": [...]}` or with
//!   `"query_id": i` indexing into a separate query `.fvecs` file.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{CompassError, Result};
use crate::model::{Dataset, FilteredQuery, Predicate, Schema};

fn read_vecs<T>(path: &Path, decode: impl Fn([u8; 4]) -> T) -> Result<(usize, Vec<T>)> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    decode_vecs(&bytes, decode)
}

fn decode_vecs<T>(bytes: &[u8], decode: impl Fn([u8; 4]) -> T) -> Result<(usize, Vec<T>)> {
    let mut offset = 0usize;
    let mut dim = None;
    let mut out = Vec::new();
    let word = |at: usize| -> [u8; 4] { bytes[at..at + 4].try_into().expect("4 bytes") };
    while offset < bytes.len() {
        if bytes.len() - offset < 4 {
            return Err(CompassError::Format {
                offset: offset as u64,
                msg: "truncated dimension header".into(),
            });
        }
        let d = i32::from_le_bytes(word(offset));
        if d <= 0 {
            return Err(CompassError::Format {
                offset: offset as u64,
                msg: format!("non-positive dimension {d}"),
            });
        }
        let d = d as usize;
        match dim {
            None => dim = Some(d),
            Some(prev) if prev != d => {
                return Err(CompassError::Format {
                    offset: offset as u64,
                    msg: format!("dimension {d} differs from {prev}"),
                })
            }
            _ => {}
        }
        let body = offset + 4;
        if bytes.len() - body < 4 * d {
            return Err(CompassError::Format {
                offset: body as u64,
                msg: format!("truncated record: need {} bytes, have {}", 4 * d, bytes.len() - body),
            });
        }
        out.extend((0..d).map(|j| decode(word(body + 4 * j))));
        offset = body + 4 * d;
    }
    Ok((dim.unwrap_or(0), out))
}

/// Reads an `.fvecs` file into a flat buffer; returns `(dim, values)`.
/// An empty file yields `(0, [])`.
pub fn read_fvecs(path: impl AsRef<Path>) -> Result<(usize, Vec<f32>)> {
    read_vecs(path.as_ref(), f32::from_le_bytes)
}

pub fn read_ivecs(path: impl AsRef<Path>) -> Result<(usize, Vec<i32>)> {
    read_vecs(path.as_ref(), i32::from_le_bytes)
}

pub fn decode_fvecs(bytes: &[u8]) -> Result<(usize, Vec<f32>)> {
    decode_vecs(bytes, f32::from_le_bytes)
}

fn write_vecs<T: Copy>(path: &Path, dim: usize, values: &[T], encode: impl Fn(T) -> [u8; 4]) -> Result<()> {
    if dim == 0 || !values.len().is_multiple_of(dim) {
        return Err(CompassError::InvalidInput(format!(
            "{} values do not form rows of dim {dim}",
            values.len()
        )));
    }
    let mut w = BufWriter::new(File::create(path)?);
    for row in values.chunks(dim) {
        w.write_all(&(dim as i32).to_le_bytes())?;
        for &x in row {
            w.write_all(&encode(x))?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_fvecs(path: impl AsRef<Path>, dim: usize, values: &[f32]) -> Result<()> {
    write_vecs(path.as_ref(), dim, values, f32::to_le_bytes)
}

pub fn write_ivecs(path: impl AsRef<Path>, dim: usize, values: &[i32]) -> Result<()> {
    write_vecs(path.as_ref(), dim, values, i32::to_le_bytes)
}

/// Reads an attribute CSV; every column gets the domain `[lo, hi]`.
pub fn read_attributes_csv(path: impl AsRef<Path>, lo: f64, hi: f64) -> Result<(Schema, Vec<f64>)> {
    let mut reader = csv::Reader::from_path(path.as_ref()).map_err(csv_err)?;
    let names: Vec<String> = reader.headers().map_err(csv_err)?.iter().map(str::to_owned).collect();
    let m = names.len();
    let mut values = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        if record.len() != m {
            return Err(CompassError::InvalidInput(format!(
                "attribute row {row} has {} fields, header has {m}",
                record.len()
            )));
        }
        for field in &record {
            values.push(field.trim().parse::<f64>().map_err(|e| {
                CompassError::InvalidInput(format!("attribute row {row}: '{field}': {e}"))
            })?);
        }
    }
    let schema = Schema {
        attributes: names
            .into_iter()
            .map(|name| crate::model::AttributeDef { name, lo, hi })
            .collect(),
    };
    Ok((schema, values))
}

pub fn write_attributes_csv(path: impl AsRef<Path>, schema: &Schema, values: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref()).map_err(csv_err)?;
    w.write_record(schema.names()).map_err(csv_err)?;
    for row in values.chunks(schema.len().max(1)) {
        w.write_record(row.iter().map(|v| format!("{v:?}"))).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> CompassError {
    CompassError::InvalidInput(format!("attribute CSV: {e}"))
}

/// Loads vectors and attributes, dropping exact duplicate vectors (first
/// occurrence kept). Returns the dataset and the number of rows dropped.
pub fn load_dataset(vectors: impl AsRef<Path>, attributes: impl AsRef<Path>) -> Result<(Dataset, usize)> {
    let (dim, v) = read_fvecs(vectors)?;
    let (schema, a) = read_attributes_csv(attributes, 0.0, 1.0)?;
    let ds = Dataset::new(dim.max(1), v, a, schema)?;
    Ok(dedup(&ds))
}

/// Removes records whose vector bit-pattern repeats an earlier record.
pub fn dedup(dataset: &Dataset) -> (Dataset, usize) {
    let mut seen = HashSet::with_capacity(dataset.len());
    let mut vectors = Vec::with_capacity(dataset.raw_vectors().len());
    let mut attrs = Vec::with_capacity(dataset.raw_attributes().len());
    let mut dropped = 0;
    for id in 0..dataset.len() as u32 {
        let key: Vec<u32> = dataset.vector(id).iter().map(|x| x.to_bits()).collect();
        if seen.insert(key) {
            vectors.extend_from_slice(dataset.vector(id));
            attrs.extend_from_slice(dataset.attributes(id));
        } else {
            dropped += 1;
        }
    }
    let ds = Dataset::new(dataset.dim(), vectors, attrs, dataset.schema().clone())
        .expect("subset of a valid dataset is valid");
    (ds, dropped)
}

/// `m` independent Uniform[0, 1) attributes per record.
pub fn generate_attributes(n: usize, m: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n * m).map(|_| rng.random::<f64>()).collect()
}

/// A range of width `passrate` on attribute `attr` with a uniformly drawn
/// lower bound in `[0, 1 - passrate]`.
pub fn generate_range_predicate(attr: usize, passrate: f64, rng: &mut impl Rng) -> Result<Predicate> {
    if !(passrate > 0.0 && passrate <= 1.0) {
        return Err(CompassError::InvalidInput(format!("passrate {passrate} outside (0, 1]")));
    }
    let lo = rng.random::<f64>() * (1.0 - passrate);
    Ok(Predicate::range(attr, lo, lo + passrate))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComposeMode {
    #[serde(alias = "conj")]
    Conjunction,
    #[serde(alias = "disj")]
    Disjunction,
}

impl ComposeMode {
    pub fn short(self) -> &'static str {
        match self {
            ComposeMode::Conjunction => "conj",
            ComposeMode::Disjunction => "disj",
        }
    }

    /// Passrate of `n_attrs` independent leaves of passrate `s` each.
    pub fn expected_passrate(self, n_attrs: usize, s: f64) -> f64 {
        match self {
            ComposeMode::Conjunction => s.powi(n_attrs as i32),
            ComposeMode::Disjunction => 1.0 - (1.0 - s).powi(n_attrs as i32),
        }
    }
}

impl std::str::FromStr for ComposeMode {
    type Err = CompassError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conj" | "conjunction" | "and" => Ok(ComposeMode::Conjunction),
            "disj" | "disjunction" | "or" => Ok(ComposeMode::Disjunction),
            other => Err(CompassError::InvalidInput(format!("unknown mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkloadMeta {
    pub mode: ComposeMode,
    pub n_attrs: usize,
    pub passrate: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Workload {
    pub queries: Vec<FilteredQuery>,
    pub meta: Option<WorkloadMeta>,
}

/// One predicate per query vector over attributes `0..n_attrs`, each leaf
/// at passrate `s`, combined under AND or OR.
pub fn compose_workload(
    query_vectors: &[f32],
    dim: usize,
    mode: ComposeMode,
    n_attrs: usize,
    s: f64,
    k: usize,
    seed: u64,
) -> Result<Workload> {
    if n_attrs == 0 {
        return Err(CompassError::InvalidInput("n_attrs must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let queries = query_vectors
        .chunks(dim)
        .map(|q| {
            let leaves = (0..n_attrs)
                .map(|a| generate_range_predicate(a, s, &mut rng))
                .collect::<Result<Vec<_>>>()?;
            let predicate = match (leaves.len(), mode) {
                (1, _) => leaves.into_iter().next().expect("one leaf"),
                (_, ComposeMode::Conjunction) => Predicate::And(leaves),
                (_, ComposeMode::Disjunction) => Predicate::Or(leaves),
            };
            Ok(FilteredQuery::new(q.to_vec(), predicate, k))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Workload {
        queries,
        meta: Some(WorkloadMeta {
            mode,
            n_attrs,
            passrate: s,
            seed,
        }),
    })
}

/// Fraction of the dataset passing `p`.
pub fn measured_passrate(dataset: &Dataset, p: &Predicate) -> f64 {
    let pass = (0..dataset.len() as u32).filter(|&i| p.matches(dataset.attributes(i))).count();
    pass as f64 / dataset.len().max(1) as f64
}

pub fn write_workload(path: impl AsRef<Path>, workload: &Workload) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    if let Some(meta) = &workload.meta {
        serde_json::to_writer(&mut w, &json!({ "meta": meta })).map_err(json_err)?;
        w.write_all(b"\n")?;
    }
    for q in &workload.queries {
        let line = json!({ "k": q.k, "predicate": q.predicate.to_json(), "vector": q.vector });
        serde_json::to_writer(&mut w, &line).map_err(json_err)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a workload; `query_vectors` resolves `"query_id"` references.
pub fn read_workload(path: impl AsRef<Path>, query_vectors: Option<(usize, &[f32])>) -> Result<Workload> {
    let reader = BufReader::new(File::open(path.as_ref())?);
    let mut queries = Vec::new();
    let mut meta = None;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: String| CompassError::InvalidInput(format!("workload line {}: {msg}", lineno + 1));
        let value: Value = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        if let Some(m) = value.get("meta") {
            meta = Some(serde_json::from_value(m.clone()).map_err(|e| bad(e.to_string()))?);
            continue;
        }
        let k = value
            .get("k")
            .and_then(Value::as_u64)
            .ok_or_else(|| bad("missing integer 'k'".into()))? as usize;
        let predicate = Predicate::from_json(value.get("predicate").ok_or_else(|| bad("missing 'predicate'".into()))?)
            .map_err(|e| bad(e.to_string()))?;
        let vector = if let Some(v) = value.get("vector") {
            serde_json::from_value::<Vec<f32>>(v.clone()).map_err(|e| bad(e.to_string()))?
        } else if let Some(id) = value.get("query_id").and_then(Value::as_u64) {
            let (dim, data) = query_vectors.ok_or_else(|| bad("query_id given without a query vector file".into()))?;
            let id = id as usize;
            if (id + 1) * dim > data.len() {
                return Err(bad(format!("query_id {id} out of range")));
            }
            data[id * dim..(id + 1) * dim].to_vec()
        } else {
            return Err(bad("needs 'vector' or 'query_id'".into()));
        };
        queries.push(FilteredQuery::new(vector, predicate, k));
    }
    Ok(Workload { queries, meta })
}

fn json_err(e: serde_json::Error) -> CompassError {
    CompassError::InvalidInput(e.to_string())
}

/// Parameters of the synthetic Gaussian-mixture generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureSpec {
    pub n: usize,
    pub n_queries: usize,
    pub dim: usize,
    pub components: usize,
    /// Standard deviation of component centers per coordinate.
    pub center_scale: f32,
    /// Standard deviation of points around their center per coordinate.
    pub spread: f32,
    pub seed: u64,
}

impl MixtureSpec {
    pub fn new(n: usize, n_queries: usize, dim: usize, seed: u64) -> Self {
        Self {
            n,
            n_queries,
            dim,
            components: 64,
            center_scale: 1.0,
            spread: 2.0,
            seed,
        }
    }
}

/// Draws `n + n_queries` points from the mixture; the first `n` form the
/// base set and the rest are held out as queries. Returns `(base, queries)`.
pub fn gaussian_mixture(spec: &MixtureSpec) -> (Vec<f32>, Vec<f32>) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let center = Normal::new(0.0f32, spec.center_scale).expect("finite scale");
    let noise = Normal::new(0.0f32, spec.spread).expect("finite spread");
    let components = spec.components.max(1);
    let centers: Vec<f32> = (0..components * spec.dim).map(|_| center.sample(&mut rng)).collect();
    let total = spec.n + spec.n_queries;
    let mut points = Vec::with_capacity(total * spec.dim);
    for _ in 0..total {
        let c = rng.random_range(0..components);
        let base = &centers[c * spec.dim..(c + 1) * spec.dim];
        points.extend(base.iter().map(|&x| x + noise.sample(&mut rng)));
    }
    let queries = points.split_off(spec.n * spec.dim);
    (points, queries)
}

/// Uniform vectors in `[-1, 1)^dim`.
pub fn uniform_vectors(n: usize, dim: usize, seed: u64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect()
}
