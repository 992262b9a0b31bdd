//! Save an index bundle and a ground-truth file, then load both back
//! against the same dataset and workload.
//!
//! ```text
//! cargo run --release --example persistence
//! ```

use compass::bundle::{GroundTruth, IndexBundle};
use compass::workload::{compose_workload, gaussian_mixture, generate_attributes, ComposeMode, MixtureSpec};
use compass::{CompassIndex, Dataset, IndexParams, Schema, SearchConfig};

fn main() -> compass::Result<()> {
    let (n, dim) = (10_000, 16);
    let (base, qv) = gaussian_mixture(&MixtureSpec::new(n, 20, dim, 31));
    let dataset = Dataset::new(dim, base, generate_attributes(n, 2, 32), Schema::unit(2))?;
    let index = CompassIndex::build(dataset.clone(), IndexParams::for_size(n))?;
    let w = compose_workload(&qv, dim, ComposeMode::Disjunction, 2, 0.1, 10, 33)?;

    let dir = std::env::temp_dir().join("compass-persistence");
    std::fs::create_dir_all(&dir)?;
    let bundle = IndexBundle::from_index(&index);
    for s in bundle.section_sizes() {
        println!("{:<16} {:>10}", s.name, s.bytes);
    }
    bundle.save(dir.join("index.bin"))?;
    GroundTruth::compute(&dataset, &w.queries, 10).save(dir.join("gt.bin"))?;

    // the dataset is not stored in the bundle; it is bound by hash instead
    let loaded = IndexBundle::load(dir.join("index.bin"))?.into_index(dataset.clone())?;
    let gt = GroundTruth::load(dir.join("gt.bin"))?;
    gt.check_binding(&dataset, &w.queries, 10)?;

    let config = SearchConfig::for_k(10, 80);
    for (q, t) in w.queries.iter().zip(&gt.rows).take(5) {
        let a = index.search(&q.vector, &q.predicate, 10, &config)?;
        let b = loaded.search(&q.vector, &q.predicate, 10, &config)?;
        assert_eq!(a.results, b.results);
        println!("{:?} vs truth {:?}", b.ids(), t.iter().map(|r| r.id).collect::<Vec<_>>());
    }

    let other = Dataset::new(dim, dataset.raw_vectors().to_vec(), generate_attributes(n, 2, 99), Schema::unit(2))?;
    match IndexBundle::load(dir.join("index.bin"))?.into_index(other) {
        Err(e) => println!("different dataset rejected: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
