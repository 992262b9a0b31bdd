//! Shared domain types: datasets, range predicates, distances, recall and
//! search configuration.

use std::cmp::Ordering;
use std::fmt;

use serde_json::{json, Map, Value};

use crate::error::{CompassError, Result};

/// Record identifier: the dense index of a record in its [`Dataset`].
pub type RecordId = u32;

/// Name and closed value domain of one relational attribute.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeDef {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Schema {
    pub attributes: Vec<AttributeDef>,
}

impl Schema {
    /// `m` attributes named `a0..a{m-1}` over the unit domain `[0, 1]`.
    pub fn unit(m: usize) -> Self {
        let attributes = (0..m)
            .map(|i| AttributeDef {
                name: format!("a{i}"),
                lo: 0.0,
                hi: 1.0,
            })
            .collect();
        Self { attributes }
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.attributes.iter().map(|a| a.name.as_str())
    }
}

/// Aligned vectors and attribute tuples. Vectors and attributes are stored
/// row-major in flat buffers; record `i` owns `vectors[i*dim..(i+1)*dim]`
/// and `attributes[i*m..(i+1)*m]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    vectors: Vec<f32>,
    attributes: Vec<f64>,
    schema: Schema,
}

impl Dataset {
    pub fn new(dim: usize, vectors: Vec<f32>, attributes: Vec<f64>, schema: Schema) -> Result<Self> {
        if dim == 0 {
            return Err(CompassError::InvalidInput("dimension must be positive".into()));
        }
        if !vectors.len().is_multiple_of(dim) {
            return Err(CompassError::InvalidInput(format!(
                "vector buffer of length {} is not a multiple of dim {dim}",
                vectors.len()
            )));
        }
        let n = vectors.len() / dim;
        let m = schema.len();
        if attributes.len() != n * m {
            return Err(CompassError::InvalidInput(format!(
                "expected {} attribute values for {n} records x {m} attributes, got {}",
                n * m,
                attributes.len()
            )));
        }
        if n > RecordId::MAX as usize {
            return Err(CompassError::InvalidInput(format!("{n} records exceed the id space")));
        }
        for (i, row) in attributes.chunks(m.max(1)).enumerate().take(if m == 0 { 0 } else { n }) {
            for (j, (&v, def)) in row.iter().zip(&schema.attributes).enumerate() {
                if !(def.lo..=def.hi).contains(&v) {
                    return Err(CompassError::InvalidInput(format!(
                        "record {i} attribute {j} = {v} outside domain [{}, {}]",
                        def.lo, def.hi
                    )));
                }
            }
        }
        Ok(Self {
            dim,
            vectors,
            attributes,
            schema,
        })
    }

    /// Builds a dataset from per-record rows.
    pub fn from_rows(vectors: &[Vec<f32>], attributes: &[Vec<f64>], schema: Schema) -> Result<Self> {
        let dim = vectors.first().map_or(0, Vec::len);
        if vectors.len() != attributes.len() {
            return Err(CompassError::InvalidInput(format!(
                "{} vectors but {} attribute tuples",
                vectors.len(),
                attributes.len()
            )));
        }
        if let Some((i, v)) = vectors.iter().enumerate().find(|(_, v)| v.len() != dim) {
            return Err(CompassError::InvalidInput(format!(
                "record {i} has {} components, expected {dim}",
                v.len()
            )));
        }
        if let Some((i, a)) = attributes.iter().enumerate().find(|(_, a)| a.len() != schema.len()) {
            return Err(CompassError::InvalidInput(format!(
                "record {i} has {} attributes, schema declares {}",
                a.len(),
                schema.len()
            )));
        }
        Self::new(dim, vectors.concat(), attributes.concat(), schema)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn n_attributes(&self) -> usize {
        self.schema.len()
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    #[inline]
    pub fn vector(&self, id: RecordId) -> &[f32] {
        let start = id as usize * self.dim;
        &self.vectors[start..start + self.dim]
    }

    #[inline]
    pub fn attributes(&self, id: RecordId) -> &[f64] {
        let m = self.schema.len();
        let start = id as usize * m;
        &self.attributes[start..start + m]
    }

    pub fn raw_vectors(&self) -> &[f32] {
        &self.vectors
    }

    pub fn raw_attributes(&self) -> &[f64] {
        &self.attributes
    }

    pub fn check_query_dim(&self, q: &[f32]) -> Result<()> {
        if q.len() != self.dim {
            return Err(CompassError::DimensionMismatch {
                expected: self.dim,
                found: q.len(),
            });
        }
        Ok(())
    }
}

/// Squared Euclidean distance.
pub fn squared_l2(u: &[f32], v: &[f32]) -> Result<f32> {
    if u.len() != v.len() {
        return Err(CompassError::DimensionMismatch {
            expected: u.len(),
            found: v.len(),
        });
    }
    Ok(l2_sq(u, v))
}

/// Unchecked kernel behind [`squared_l2`]; callers guarantee equal lengths.
#[inline]
pub(crate) fn l2_sq(u: &[f32], v: &[f32]) -> f32 {
    debug_assert_eq!(u.len(), v.len());
    // Eight independent accumulators let the compiler vectorize the loop.
    let mut acc = [0.0f32; 8];
    let mut cu = u.chunks_exact(8);
    let mut cv = v.chunks_exact(8);
    for (a, b) in (&mut cu).zip(&mut cv) {
        for i in 0..8 {
            let d = a[i] - b[i];
            acc[i] += d * d;
        }
    }
    let mut tail = 0.0f32;
    for (a, b) in cu.remainder().iter().zip(cv.remainder()) {
        let d = a - b;
        tail += d * d;
    }
    acc.iter().sum::<f32>() + tail
}

/// Boolean tree of closed range conditions over attributes.
#[derive(Debug, Clone, PartialEq)]
pub enum Predicate {
    /// Matches every record.
    True,
    /// `lo <= attrs[attr] <= hi`.
    Range { attr: usize, lo: f64, hi: f64 },
    And(Vec<Predicate>),
    Or(Vec<Predicate>),
}

impl Predicate {
    pub fn range(attr: usize, lo: f64, hi: f64) -> Self {
        Predicate::Range { attr, lo, hi }
    }

    pub fn is_always_true(&self) -> bool {
        matches!(self, Predicate::True)
    }

    /// Checks structural invariants against a schema with `m` attributes.
    pub fn validate(&self, m: usize) -> Result<()> {
        match self {
            Predicate::True => Ok(()),
            Predicate::Range { attr, lo, hi } => {
                if *attr >= m {
                    return Err(CompassError::InvalidPredicate(format!(
                        "attribute index {attr} out of range for {m} attributes"
                    )));
                }
                if lo.is_nan() || hi.is_nan() || lo > hi {
                    return Err(CompassError::InvalidPredicate(format!(
                        "empty or malformed range [{lo}, {hi}] on attribute {attr}"
                    )));
                }
                Ok(())
            }
            Predicate::And(children) | Predicate::Or(children) => {
                if children.is_empty() {
                    return Err(CompassError::InvalidPredicate(
                        "AND/OR node without children".into(),
                    ));
                }
                children.iter().try_for_each(|c| c.validate(m))
            }
        }
    }

    /// Evaluates the predicate, reporting out-of-range attribute indices.
    pub fn evaluate(&self, attrs: &[f64]) -> Result<bool> {
        Ok(match self {
            Predicate::True => true,
            Predicate::Range { attr, lo, hi } => {
                let v = attrs.get(*attr).ok_or_else(|| {
                    CompassError::InvalidPredicate(format!(
                        "attribute index {attr} out of range for {} attributes",
                        attrs.len()
                    ))
                })?;
                *lo <= *v && *v <= *hi
            }
            Predicate::And(children) => {
                for c in children {
                    if !c.evaluate(attrs)? {
                        return Ok(false);
                    }
                }
                true
            }
            Predicate::Or(children) => {
                for c in children {
                    if c.evaluate(attrs)? {
                        return Ok(true);
                    }
                }
                false
            }
        })
    }

    /// Evaluation for predicates already validated against the schema.
    #[inline]
    pub fn matches(&self, attrs: &[f64]) -> bool {
        match self {
            Predicate::True => true,
            Predicate::Range { attr, lo, hi } => {
                let v = attrs[*attr];
                *lo <= v && v <= *hi
            }
            Predicate::And(children) => children.iter().all(|c| c.matches(attrs)),
            Predicate::Or(children) => children.iter().any(|c| c.matches(attrs)),
        }
    }

    /// All range leaves in left-to-right order.
    pub fn attribute_ranges(&self) -> Vec<(usize, (f64, f64))> {
        let mut out = Vec::new();
        self.collect_ranges(&mut out);
        out
    }

    fn collect_ranges(&self, out: &mut Vec<(usize, (f64, f64))>) {
        match self {
            Predicate::True => {}
            Predicate::Range { attr, lo, hi } => out.push((*attr, (*lo, *hi))),
            Predicate::And(children) | Predicate::Or(children) => {
                children.iter().for_each(|c| c.collect_ranges(out))
            }
        }
    }

    pub fn to_json(&self) -> Value {
        match self {
            Predicate::True => json!({ "true": true }),
            Predicate::Range { attr, lo, hi } => json!({ "attr": attr, "lo": lo, "hi": hi }),
            Predicate::And(c) => json!({ "and": c.iter().map(Predicate::to_json).collect::<Vec<_>>() }),
            Predicate::Or(c) => json!({ "or": c.iter().map(Predicate::to_json).collect::<Vec<_>>() }),
        }
    }

    pub fn from_json(value: &Value) -> Result<Self> {
        Self::parse_node(value, "$")
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(s)
            .map_err(|e| CompassError::InvalidPredicate(format!("$: not valid JSON: {e}")))?;
        Self::from_json(&value)
    }

    fn parse_node(value: &Value, path: &str) -> Result<Self> {
        let bad = |msg: &str| CompassError::InvalidPredicate(format!("{path}: {msg}"));
        let obj: &Map<String, Value> = value.as_object().ok_or_else(|| bad("expected an object"))?;
        if let Some(children) = obj.get("and").or_else(|| obj.get("or")) {
            let is_and = obj.contains_key("and");
            if obj.len() != 1 {
                return Err(bad("an and/or node takes exactly one key"));
            }
            let key = if is_and { "and" } else { "or" };
            let items = children
                .as_array()
                .ok_or_else(|| bad(&format!("'{key}' must be an array")))?;
            if items.is_empty() {
                return Err(bad(&format!("'{key}' must not be empty")));
            }
            let parsed = items
                .iter()
                .enumerate()
                .map(|(i, c)| Self::parse_node(c, &format!("{path}.{key}[{i}]")))
                .collect::<Result<Vec<_>>>()?;
            return Ok(if is_and {
                Predicate::And(parsed)
            } else {
                Predicate::Or(parsed)
            });
        }
        if let Some(t) = obj.get("true") {
            if obj.len() != 1 || t != &Value::Bool(true) {
                return Err(bad("always-true node must be exactly {\"true\": true}"));
            }
            return Ok(Predicate::True);
        }
        if obj.contains_key("attr") {
            if obj.len() != 3 {
                return Err(bad("range node takes exactly the keys attr, lo, hi"));
            }
            let attr = obj["attr"]
                .as_u64()
                .ok_or_else(|| bad("'attr' must be a non-negative integer"))?
                as usize;
            let num = |k: &str| {
                obj.get(k)
                    .and_then(Value::as_f64)
                    .ok_or_else(|| bad(&format!("'{k}' must be a number")))
            };
            let (lo, hi) = (num("lo")?, num("hi")?);
            if lo > hi {
                return Err(bad(&format!("lo {lo} exceeds hi {hi}")));
            }
            return Ok(Predicate::Range { attr, lo, hi });
        }
        Err(bad("unrecognized predicate node"))
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Predicate::True => write!(f, "TRUE"),
            Predicate::Range { attr, lo, hi } => write!(f, "A{attr}∈[{lo}, {hi}]"),
            Predicate::And(c) | Predicate::Or(c) => {
                let sep = if matches!(self, Predicate::And(_)) { " AND " } else { " OR " };
                write!(f, "(")?;
                for (i, p) in c.iter().enumerate() {
                    if i > 0 {
                        f.write_str(sep)?;
                    }
                    write!(f, "{p}")?;
                }
                write!(f, ")")
            }
        }
    }
}

/// A query vector, its predicate and the number of results wanted.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredQuery {
    pub vector: Vec<f32>,
    pub predicate: Predicate,
    pub k: usize,
}

impl FilteredQuery {
    pub fn new(vector: Vec<f32>, predicate: Predicate, k: usize) -> Self {
        Self { vector, predicate, k }
    }

    pub fn validate(&self, dataset: &Dataset) -> Result<()> {
        if self.k == 0 {
            return Err(CompassError::InvalidInput("k must be at least 1".into()));
        }
        dataset.check_query_dim(&self.vector)?;
        self.predicate.validate(dataset.n_attributes())
    }
}

/// Knobs of a filtered search.
///
/// `alpha` and `beta` are the neighborhood-passrate thresholds that select
/// one-hop expansion (`sel >= alpha`), two-hop expansion
/// (`beta <= sel < alpha`) or a pivot to the relational side (`sel < beta`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig {
    /// Target size of the global result queue.
    pub ef: usize,
    pub alpha: f64,
    pub beta: f64,
    /// Step by which the graph search width grows on every batch.
    pub delta_efs: usize,
    /// New predicate-passing records fetched per relational batch.
    pub efi: usize,
}

pub const DEFAULT_ALPHA: f64 = 0.3;
pub const DEFAULT_BETA: f64 = 0.05;

impl SearchConfig {
    /// Defaults for result size `k`: `delta_efs = k`, `efi = 2k`.
    pub fn for_k(k: usize, ef: usize) -> Self {
        Self {
            ef,
            alpha: DEFAULT_ALPHA,
            beta: DEFAULT_BETA,
            delta_efs: k.max(1),
            efi: 2 * k.max(1),
        }
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        let bad = |msg: String| Err(CompassError::InvalidConfig(msg));
        if k == 0 {
            return bad("k must be at least 1".into());
        }
        if self.ef < k {
            return bad(format!("ef {} is smaller than k {k}", self.ef));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad(format!("alpha {} outside (0, 1]", self.alpha));
        }
        if !(self.beta >= 0.0 && self.beta < self.alpha) {
            return bad(format!("beta {} outside [0, alpha)", self.beta));
        }
        if self.delta_efs == 0 || self.efi == 0 {
            return bad("delta_efs and efi must be positive".into());
        }
        Ok(())
    }
}

/// A record paired with its squared distance to the current query.
///
/// Ordered by `(dist, id)` so every heap in the crate breaks ties the same
/// way.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredRecord {
    pub dist: f32,
    pub id: RecordId,
}

impl ScoredRecord {
    pub fn new(id: RecordId, dist: f32) -> Self {
        Self { dist, id }
    }
}

impl Eq for ScoredRecord {}

impl PartialOrd for ScoredRecord {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ScoredRecord {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then_with(|| self.id.cmp(&other.id))
    }
}

/// `|result ∩ truth| / |truth|`.
pub fn recall(result: &[RecordId], truth: &[RecordId]) -> Result<f64> {
    if truth.is_empty() {
        return Err(CompassError::EmptyGroundTruth);
    }
    Ok(overlap(result, truth) as f64 / truth.len() as f64)
}

/// `|result ∩ truth| / k`: the fixed-denominator convention used by the
/// benchmark tables.
pub fn recall_at_k(result: &[RecordId], truth: &[RecordId], k: usize) -> f64 {
    if k == 0 {
        return 0.0;
    }
    overlap(result, &truth[..truth.len().min(k)]) as f64 / k as f64
}

fn overlap(result: &[RecordId], truth: &[RecordId]) -> usize {
    let truth: std::collections::HashSet<_> = truth.iter().collect();
    let result: std::collections::HashSet<_> = result.iter().collect();
    result.intersection(&truth).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn l2_trivial_cases() {
        assert_eq!(squared_l2(&[0.0, 0.0], &[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(squared_l2(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 25.0);
        assert!(matches!(
            squared_l2(&[0.0], &[1.0, 2.0]),
            Err(CompassError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn l2_matches_scalar_reference() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let u: Vec<f32> = (0..32).map(|_| rng.random_range(-10.0..10.0)).collect();
            let v: Vec<f32> = (0..32).map(|_| rng.random_range(-10.0..10.0)).collect();
            let mut reference = 0.0f64;
            for i in 0..32 {
                let d = u[i] as f64 - v[i] as f64;
                reference += d * d;
            }
            let got = squared_l2(&u, &v).unwrap() as f64;
            assert!(((got - reference) / reference).abs() < 1e-6, "{got} vs {reference}");
        }
    }

    fn fig_record() -> Vec<f64> {
        vec![62.0, 6.0]
    }

    #[test]
    fn predicate_evaluation() {
        let p = Predicate::And(vec![Predicate::range(0, 50.0, 70.0), Predicate::range(1, 0.0, 10.0)]);
        assert!(p.evaluate(&fig_record()).unwrap());
        assert!(!Predicate::range(1, 10.0, 20.0).evaluate(&fig_record()).unwrap());
        assert!(Predicate::True.evaluate(&fig_record()).unwrap());
        assert!(Predicate::range(2, 0.0, 1.0).evaluate(&fig_record()).is_err());
        // closed interval endpoints
        assert!(Predicate::range(0, 62.0, 62.0).evaluate(&fig_record()).unwrap());
    }

    #[test]
    fn validation_rejects_bad_leaves() {
        assert!(Predicate::range(3, 0.0, 1.0).validate(2).is_err());
        assert!(Predicate::range(0, 2.0, 1.0).validate(2).is_err());
        assert!(Predicate::And(vec![]).validate(2).is_err());
        assert!(Predicate::Or(vec![Predicate::True, Predicate::range(1, 0.0, 0.0)])
            .validate(2)
            .is_ok());
    }

    #[test]
    fn recall_cases() {
        let truth: Vec<RecordId> = (0..10).collect();
        assert_eq!(recall(&truth, &truth).unwrap(), 1.0);
        let half: Vec<RecordId> = (5..15).collect();
        assert_eq!(recall(&half, &truth).unwrap(), 0.5);
        let disjoint: Vec<RecordId> = (20..30).collect();
        assert_eq!(recall(&disjoint, &truth).unwrap(), 0.0);
        assert!(matches!(recall(&truth, &[]), Err(CompassError::EmptyGroundTruth)));
        assert_eq!(recall_at_k(&[1, 2], &[1, 2], 10), 0.2);
    }

    #[test]
    fn attribute_ranges_in_document_order() {
        assert_eq!(Predicate::range(0, 0.0, 5.0).attribute_ranges(), vec![(0, (0.0, 5.0))]);
        let and = Predicate::And(vec![Predicate::range(0, 0.0, 5.0), Predicate::range(1, 1.0, 2.0)]);
        assert_eq!(and.attribute_ranges(), vec![(0, (0.0, 5.0)), (1, (1.0, 2.0))]);
        let or = Predicate::Or(vec![Predicate::range(0, 0.0, 5.0), Predicate::range(1, 1.0, 2.0)]);
        assert_eq!(or.attribute_ranges(), and.attribute_ranges());
    }

    #[test]
    fn json_round_trip_and_error_paths() {
        let p = Predicate::Or(vec![
            Predicate::And(vec![Predicate::range(0, 0.1, 0.4), Predicate::True]),
            Predicate::range(1, 0.0, 1.0),
        ]);
        assert_eq!(Predicate::from_json(&p.to_json()).unwrap(), p);

        let err = Predicate::from_json_str(r#"{"and":[{"attr":0,"lo":0,"hi":1},{"attr":1,"lo":2}]}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("$.and[1]"), "{err}");
        let err = Predicate::from_json_str(r#"{"or":[{"nope":1}]}"#).unwrap_err().to_string();
        assert!(err.contains("$.or[0]"), "{err}");
        assert!(Predicate::from_json_str(r#"{"true":false}"#).is_err());
        assert!(Predicate::from_json_str(r#"{"attr":0,"lo":2,"hi":1}"#).is_err());
    }

    #[test]
    fn config_validation() {
        let c = SearchConfig::for_k(10, 100);
        assert_eq!((c.delta_efs, c.efi), (10, 20));
        assert!(c.validate(10).is_ok());
        assert!(SearchConfig::for_k(10, 5).validate(10).is_err());
        assert!(SearchConfig { beta: 0.3, ..c }.validate(10).is_err());
        assert!(SearchConfig { alpha: 0.0, beta: 0.0, ..c }.validate(10).is_err());
    }

    #[test]
    fn dataset_invariants() {
        let schema = Schema::unit(1);
        assert!(Dataset::from_rows(&[vec![0.0, 1.0], vec![1.0]], &[vec![0.1], vec![0.2]], schema.clone()).is_err());
        assert!(Dataset::from_rows(&[vec![0.0]], &[vec![1.5]], schema.clone()).is_err());
        let ds = Dataset::from_rows(&[vec![0.0, 1.0], vec![2.0, 3.0]], &[vec![0.1], vec![0.2]], schema).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.vector(1), &[2.0, 3.0]);
        assert_eq!(ds.attributes(1), &[0.2]);
    }

    fn arb_predicate(m: usize) -> impl Strategy<Value = Predicate> {
        let leaf = prop_oneof![
            Just(Predicate::True),
            (0..m, 0.0f64..1.0, 0.0f64..1.0).prop_map(|(a, x, y)| Predicate::range(a, x.min(y), x.max(y))),
        ];
        leaf.prop_recursive(3, 16, 4, |inner| {
            prop_oneof![
                prop::collection::vec(inner.clone(), 1..4).prop_map(Predicate::And),
                prop::collection::vec(inner, 1..4).prop_map(Predicate::Or),
            ]
        })
    }

    proptest! {
        #[test]
        fn l2_is_symmetric(u in prop::collection::vec(-100.0f32..100.0, 16), v in prop::collection::vec(-100.0f32..100.0, 16)) {
            prop_assert_eq!(squared_l2(&u, &v).unwrap(), squared_l2(&v, &u).unwrap());
            prop_assert_eq!(squared_l2(&u, &u).unwrap(), 0.0);
        }

        #[test]
        fn and_with_true_is_identity(p in arb_predicate(3), attrs in prop::collection::vec(0.0f64..1.0, 3)) {
            let wrapped = Predicate::And(vec![p.clone(), Predicate::True]);
            prop_assert_eq!(wrapped.evaluate(&attrs).unwrap(), p.evaluate(&attrs).unwrap());
            prop_assert_eq!(p.matches(&attrs), p.evaluate(&attrs).unwrap());
        }

        #[test]
        fn conjunction_and_disjunction_of_leaves(
            leaves in prop::collection::vec((0usize..3, 0.0f64..1.0, 0.0f64..1.0), 1..5),
            attrs in prop::collection::vec(0.0f64..1.0, 3),
        ) {
            let leaves: Vec<_> = leaves.into_iter().map(|(a, x, y)| Predicate::range(a, x.min(y), x.max(y))).collect();
            let each: Vec<bool> = leaves.iter().map(|l| l.matches(&attrs)).collect();
            if Predicate::And(leaves.clone()).matches(&attrs) {
                prop_assert!(each.iter().all(|&b| b));
            }
            if Predicate::Or(leaves.clone()).matches(&attrs) {
                prop_assert!(each.iter().any(|&b| b));
            }
        }

        #[test]
        fn recall_is_monotone(truth in prop::collection::hash_set(0u32..50, 1..10), extra in 0u32..50) {
            let truth: Vec<_> = truth.into_iter().collect();
            let partial: Vec<_> = truth.iter().copied().skip(1).collect();
            let before = recall(&partial, &truth).unwrap();
            let mut grown = partial.clone();
            grown.push(truth[0]);
            prop_assert!(recall(&grown, &truth).unwrap() >= before);
            grown.push(extra);
            prop_assert!(recall(&grown, &truth).unwrap() >= before);
        }

        #[test]
        fn json_round_trips(p in arb_predicate(4)) {
            prop_assert_eq!(Predicate::from_json(&p.to_json()).unwrap(), p);
        }
    }
}
