//! Sweep `ef` for the full search and its two single-index variants and
//! write the rows as CSV, the same shape `compass-bench bench` produces.
//!
//! ```text
//! cargo run --release --example ablation > ablation.csv
//! ```

use compass::bench::{sweep, write_csv, Knobs, RowLabels, Strategy};
use compass::bundle::GroundTruth;
use compass::workload::{compose_workload, gaussian_mixture, generate_attributes, ComposeMode, MixtureSpec};
use compass::{CompassIndex, Dataset, IndexParams, Schema};

fn main() -> compass::Result<()> {
    let (n, dim, k) = (20_000, 32, 10);
    let (base, qv) = gaussian_mixture(&MixtureSpec::new(n, 100, dim, 41));
    let dataset = Dataset::new(dim, base, generate_attributes(n, 2, 42), Schema::unit(2))?;
    let index = CompassIndex::build(dataset, IndexParams::for_size(n))?;
    let w = compose_workload(&qv, dim, ComposeMode::Conjunction, 2, 0.1, k, 43)?;
    let truth = GroundTruth::compute(index.dataset(), &w.queries, k);

    // a lower beta pivots less often; compare against the default
    let knobs = [Knobs::default(), Knobs { beta: Some(0.01), ..Knobs::default() }];
    let schedule = [10, 20, 40, 80, 160, 320];
    let labels = RowLabels::from_workload(&w);
    let mut rows = Vec::new();
    for strategy in [Strategy::Compass, Strategy::GraphOnly, Strategy::RelationalOnly] {
        rows.extend(sweep(&index, &w.queries, &truth, strategy, &schedule, k, &knobs[0], &labels)?);
    }
    let low_beta = sweep(&index, &w.queries, &truth, Strategy::Compass, &schedule, k, &knobs[1], &labels)?;
    for (a, b) in rows.iter().zip(&low_beta) {
        eprintln!("ef {:>4}: recall {:.3} (beta 0.05) vs {:.3} (beta 0.01)", a.ef, a.mean_recall, b.mean_recall);
    }
    write_csv(&rows, std::io::stdout())
}
