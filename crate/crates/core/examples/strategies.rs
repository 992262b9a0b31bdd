//! Compare the search strategies on one workload: recall against distance
//! computations at a few `ef` values.
//!
//! ```text
//! cargo run --release --example strategies
//! ```

use compass::bench::{run_strategy, Strategy};
use compass::workload::{compose_workload, gaussian_mixture, generate_attributes, ComposeMode, MixtureSpec};
use compass::{brute_force_filtered_knn, recall_at_k, CompassIndex, Dataset, IndexParams, Schema, SearchConfig};

fn main() -> compass::Result<()> {
    let (n, dim, k) = (20_000, 32, 10);
    let (base, qv) = gaussian_mixture(&MixtureSpec::new(n, 100, dim, 21));
    let dataset = Dataset::new(dim, base, generate_attributes(n, 2, 22), Schema::unit(2))?;
    let index = CompassIndex::build(dataset, IndexParams::for_size(n))?;

    let w = compose_workload(&qv, dim, ComposeMode::Conjunction, 2, 0.3, k, 23)?;
    let truth: Vec<Vec<u32>> = w
        .queries
        .iter()
        .map(|q| brute_force_filtered_knn(index.dataset(), &q.vector, &q.predicate, k).iter().map(|r| r.id).collect())
        .collect();

    println!("{:<16} {:>5} {:>8} {:>11}", "strategy", "ef", "recall", "distances");
    for strategy in Strategy::ALL {
        for ef in [20, 80, 320] {
            let config = SearchConfig::for_k(k, ef);
            let (mut recall, mut comps) = (0.0, 0u64);
            for (q, t) in w.queries.iter().zip(&truth) {
                let o = run_strategy(&index, strategy, &q.vector, &q.predicate, k, &config)?;
                recall += recall_at_k(&o.ids(), t, k);
                comps += o.total_comps();
            }
            let nq = w.queries.len() as f64;
            println!("{:<16} {ef:>5} {:>8.3} {:>11.0}", strategy.name(), recall / nq, comps as f64 / nq);
        }
    }
    Ok(())
}
