//! Generate datasets and filtered workloads, write them in the on-disk
//! formats, and check each workload's measured passrate.
//!
//! ```text
//! cargo run --release --example workloads -- /tmp/compass-data
//! ```

use std::path::PathBuf;

use compass::workload::{
    compose_workload, gaussian_mixture, generate_attributes, measured_passrate, read_workload, write_attributes_csv,
    write_fvecs, write_workload, ComposeMode, MixtureSpec,
};
use compass::{Dataset, Schema};

fn main() -> compass::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "compass-data".into()));
    std::fs::create_dir_all(&dir)?;

    let spec = MixtureSpec::new(50_000, 200, 24, 5);
    let (base, queries) = gaussian_mixture(&spec);
    let schema = Schema::unit(4);
    let attrs = generate_attributes(spec.n, 4, 6);
    write_fvecs(dir.join("base.fvecs"), spec.dim, &base)?;
    write_fvecs(dir.join("queries.fvecs"), spec.dim, &queries)?;
    write_attributes_csv(dir.join("attrs.csv"), &schema, &attrs)?;
    let dataset = Dataset::new(spec.dim, base, attrs, schema)?;

    println!("{:<6} {:>7} {:>9} {:>9}", "mode", "n_attrs", "expected", "measured");
    for mode in [ComposeMode::Conjunction, ComposeMode::Disjunction] {
        for n_attrs in 1..=4 {
            let w = compose_workload(&queries, spec.dim, mode, n_attrs, 0.1, 10, 100 + n_attrs as u64)?;
            let measured = w.queries.iter().map(|q| measured_passrate(&dataset, &q.predicate)).sum::<f64>() / w.queries.len() as f64;
            println!("{:<6} {n_attrs:>7} {:>9.4} {measured:>9.4}", mode.short(), mode.expected_passrate(n_attrs, 0.1));

            let path = dir.join(format!("{}{n_attrs}.jsonl", mode.short()));
            write_workload(&path, &w)?;
            assert_eq!(read_workload(&path, None)?, w);
        }
    }
    println!("wrote {}", dir.display());
    Ok(())
}
