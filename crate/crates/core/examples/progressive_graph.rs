//! Drive the graph iterator by hand and watch it adapt to the predicate.
//!
//! Each `next` call widens the search by `delta_efs` and reports the
//! passrate of the neighborhood it stopped on. Below `beta` the search
//! would hand over to the cluster iterator; here we pull one relational
//! batch ourselves and let the graph continue from the injected records.
//!
//! ```text
//! cargo run --release --example progressive_graph
//! ```

use compass::clustered::CbtSearchState;
use compass::graph::GraphSearchState;
use compass::visit::SharedState;
use compass::workload::{gaussian_mixture, generate_attributes, MixtureSpec};
use compass::{CompassIndex, Dataset, IndexParams, Predicate, Schema, SearchConfig};

fn main() -> compass::Result<()> {
    let (n, dim) = (10_000, 16);
    let (base, queries) = gaussian_mixture(&MixtureSpec::new(n, 1, dim, 3));
    let dataset = Dataset::new(dim, base, generate_attributes(n, 1, 4), Schema::unit(1))?;
    let index = CompassIndex::build(dataset, IndexParams::for_size(n))?;

    // a 15% slice: neighborhoods straddle both thresholds
    let p = Predicate::range(0, 0.40, 0.55);
    let k = 10;
    let config = SearchConfig::for_k(k, 60);
    let view = index.view();
    let mut shared = SharedState::new(n);
    let mut graph = GraphSearchState::open(index.graph(), view, &queries, &p, k, &config, &mut shared);
    let mut relational: Option<CbtSearchState<'_>> = None;

    println!("step   efs  batch    sel  visited  mode");
    let mut found = 0;
    for step in 1..=12 {
        let (batch, sel) = graph.next(&mut shared);
        found += batch.len();
        let mode = if sel >= config.alpha {
            "one-hop"
        } else if sel >= config.beta {
            "two-hop"
        } else {
            "pivot"
        };
        println!("{step:>4} {:>5} {:>6} {:>6.3} {:>8}  {mode}", graph.efs(), batch.len(), sel, shared.visited_count());
        if sel < config.beta {
            let r = relational.get_or_insert_with(|| CbtSearchState::open(index.clustered(), view, &queries, &p, k, &config));
            let injected = r.next(&mut shared);
            found += injected.len();
            println!("            + {} from {} clusters", injected.len(), r.clusters_consumed());
        }
        if graph.exhausted(&shared) {
            break;
        }
    }

    let s = graph.stats();
    println!(
        "{found} passing records; one-hop {}, two-hop {}, low-passrate breaks {}; {} distances",
        s.one_hop,
        s.two_hop,
        s.low_sel_breaks,
        shared.dist_comps()
    );
    Ok(())
}
