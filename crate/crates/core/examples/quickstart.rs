//! Build an index over a synthetic dataset and run one filtered query.
//!
//! ```text
//! cargo run --release --example quickstart
//! ```

use compass::workload::{gaussian_mixture, generate_attributes, MixtureSpec};
use compass::{brute_force_filtered_knn, recall_at_k, CompassIndex, Dataset, IndexParams, Predicate, Schema, SearchConfig};

fn main() -> compass::Result<()> {
    let (n, dim, m) = (20_000, 32, 2);
    let (base, queries) = gaussian_mixture(&MixtureSpec::new(n, 1, dim, 7));
    let dataset = Dataset::new(dim, base, generate_attributes(n, m, 8), Schema::unit(m))?;

    let index = CompassIndex::build(dataset, IndexParams::for_size(n))?;

    // price in [0.2, 0.5] and rating below 0.3, roughly 9% of the records
    let p = Predicate::And(vec![Predicate::range(0, 0.2, 0.5), Predicate::range(1, 0.0, 0.3)]);
    let out = index.search(&queries, &p, 10, &SearchConfig::for_k(10, 100))?;

    let truth: Vec<u32> = brute_force_filtered_knn(index.dataset(), &queries, &p, 10).iter().map(|r| r.id).collect();
    for r in &out.results {
        println!("{:>6}  {:.4}  {:?}", r.id, r.dist, index.dataset().attributes(r.id));
    }
    println!(
        "recall@10 {:.2}, {} record distances, {} routing distances, {:?}",
        recall_at_k(&out.ids(), &truth, 10),
        out.n_dist_comps,
        out.n_routing_comps,
        out.elapsed
    );
    Ok(())
}
