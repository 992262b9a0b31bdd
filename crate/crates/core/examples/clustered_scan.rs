//! Inspect the clustered attribute indexes on their own: cluster sizes, a
//! per-cluster range scan, and the relational iterator visiting clusters
//! nearest-first.
//!
//! ```text
//! cargo run --release --example clustered_scan
//! ```

use compass::clustered::CbtSearchState;
use compass::visit::SharedState;
use compass::workload::{gaussian_mixture, generate_attributes, MixtureSpec};
use compass::{ClusterParams, ClusteredBTrees, CompassIndex, Dataset, IndexParams, Predicate, Schema, SearchConfig};

fn main() -> compass::Result<()> {
    let (n, dim) = (10_000, 16);
    let (base, queries) = gaussian_mixture(&MixtureSpec::new(n, 1, dim, 11));
    let dataset = Dataset::new(dim, base, generate_attributes(n, 2, 12), Schema::unit(2))?;

    let cbt = ClusteredBTrees::build(&dataset, ClusterParams::new(100, 1))?;
    let sizes: Vec<usize> = (0..cbt.nlist()).map(|c| cbt.cluster_size(c)).collect();
    println!(
        "{} clusters, sizes {}..{}",
        cbt.nlist(),
        sizes.iter().min().unwrap(),
        sizes.iter().max().unwrap()
    );

    let p = Predicate::Or(vec![Predicate::range(0, 0.0, 0.05), Predicate::range(1, 0.95, 1.0)]);
    let index = CompassIndex::build(dataset, IndexParams::for_size(n))?;
    let view = index.view();
    let cbt = index.clustered();

    // sorted runs: the first few entries of attribute 0 in cluster 0
    let head: Vec<String> = cbt.tree(0, 0).take(4).map(|(v, id)| format!("{v:.3}:{id}")).collect();
    println!("cluster 0, attr 0 starts {}", head.join(" "));
    let hits = cbt.cluster_range_scan(0, &p)?.collect_all(cbt, &p, &view);
    println!("cluster 0 has {} of {} records passing", hits.len(), cbt.cluster_size(0));

    let config = SearchConfig::for_k(10, 40);
    let mut shared = SharedState::new(n);
    let mut r = CbtSearchState::open(cbt, view, &queries, &p, 10, &config);
    for round in 1..=4 {
        let batch = r.next(&mut shared);
        let best = batch.first().map(|b| b.dist).unwrap_or(f32::NAN);
        println!(
            "pull {round}: {} records, nearest {best:.3}, {} clusters consumed, {} predicate evaluations",
            batch.len(),
            r.clusters_consumed(),
            r.stats().predicate_evals
        );
    }
    Ok(())
}
