//! Benchmark sweeps and the `compass-bench` command line.
//!
//! Sweep CSV columns, in this order:
//! `strategy, ef, mean_recall, mean_recall_truth, qps, mean_n_dist_comps,
//! mean_total_comps, mean_n_predicate_evals, mode, n_attrs, passrate`.
//! `mean_recall` divides by `k`; `mean_recall_truth` divides by the size of
//! each query's exact answer and skips queries whose answer is empty.

use std::ffi::OsString;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::baselines::{postfilter_search, prefilter_search, BaselineStats};
use crate::bundle::{dataset_hash, hex, GroundTruth, IndexBundle, HEADER_LEN};
use crate::clustered::ClusterParams;
use crate::error::{CompassError, Result};
use crate::graph::GraphBuildParams;
use crate::model::{recall, recall_at_k, Dataset, FilteredQuery, Predicate, SearchConfig};
use crate::search::{CompassIndex, IndexParams, QueryOutcome, Variant};
use crate::workload::{
    compose_workload, gaussian_mixture, generate_attributes, load_dataset, read_fvecs, read_workload,
    write_attributes_csv, write_fvecs, write_workload, ComposeMode, MixtureSpec, Workload,
};

pub const CSV_COLUMNS: [&str; 11] = [
    "strategy",
    "ef",
    "mean_recall",
    "mean_recall_truth",
    "qps",
    "mean_n_dist_comps",
    "mean_total_comps",
    "mean_n_predicate_evals",
    "mode",
    "n_attrs",
    "passrate",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum Strategy {
    Compass,
    GraphOnly,
    RelationalOnly,
    Prefilter,
    Postfilter,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Compass,
        Strategy::GraphOnly,
        Strategy::RelationalOnly,
        Strategy::Prefilter,
        Strategy::Postfilter,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Compass => "compass",
            Strategy::GraphOnly => "graph_only",
            Strategy::RelationalOnly => "relational_only",
            Strategy::Prefilter => "prefilter",
            Strategy::Postfilter => "postfilter",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = CompassError;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| CompassError::InvalidInput(format!("unknown strategy '{s}'")))
    }
}

/// 10 to 100 by 5, to 200 by 10, to 500 by 50, to 1000 by 100.
pub fn default_ef_schedule() -> Vec<usize> {
    (10..=100)
        .step_by(5)
        .chain((110..=200).step_by(10))
        .chain((250..=500).step_by(50))
        .chain((600..=1000).step_by(100))
        .collect()
}

/// Parses `"10,20,40"` or `"start:end:step"` (inclusive end).
pub fn parse_ef_schedule(s: &str) -> Result<Vec<usize>> {
    let bad = || CompassError::InvalidInput(format!("bad ef schedule '{s}'"));
    let num = |t: &str| t.trim().parse::<usize>().map_err(|_| bad());
    let efs: Vec<usize> = match s.split(':').collect::<Vec<_>>()[..] {
        [a, b, c] => {
            let (a, b, c) = (num(a)?, num(b)?, num(c)?);
            if c == 0 || a > b {
                return Err(bad());
            }
            (a..=b).step_by(c).collect()
        }
        [_] => s.split(',').map(num).collect::<Result<_>>()?,
        _ => return Err(bad()),
    };
    if efs.is_empty() || efs.contains(&0) {
        return Err(bad());
    }
    Ok(efs)
}

/// Knob overrides applied on top of [`SearchConfig::for_k`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Knobs {
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub delta_efs: Option<usize>,
    pub efi: Option<usize>,
}

impl Knobs {
    pub fn config(&self, k: usize, ef: usize) -> SearchConfig {
        let mut c = SearchConfig::for_k(k, ef);
        c.alpha = self.alpha.unwrap_or(c.alpha);
        c.beta = self.beta.unwrap_or(c.beta);
        c.delta_efs = self.delta_efs.unwrap_or(c.delta_efs);
        c.efi = self.efi.unwrap_or(c.efi);
        c
    }
}

/// Runs one query under `strategy`. Baselines report their counters in the
/// same shape; postfilter uses `k0 = ef`.
pub fn run_strategy(
    index: &CompassIndex,
    strategy: Strategy,
    q: &[f32],
    p: &Predicate,
    k: usize,
    config: &SearchConfig,
) -> Result<QueryOutcome> {
    let variant = match strategy {
        Strategy::Compass => Variant::Full,
        Strategy::GraphOnly => Variant::GraphOnly,
        Strategy::RelationalOnly => Variant::RelationalOnly,
        Strategy::Prefilter | Strategy::Postfilter => {
            index.dataset().check_query_dim(q)?;
            p.validate(index.dataset().n_attributes())?;
            let start = Instant::now();
            let (results, stats) = if strategy == Strategy::Prefilter {
                prefilter_search(index.dataset(), q, p, k)
            } else {
                postfilter_search(index, q, p, k, config.ef)
            };
            return Ok(baseline_outcome(results, stats, start.elapsed()));
        }
    };
    index.search_variant(q, p, k, config, variant)
}

fn baseline_outcome(results: Vec<crate::model::ScoredRecord>, s: BaselineStats, elapsed: std::time::Duration) -> QueryOutcome {
    QueryOutcome {
        results,
        n_dist_comps: s.dist_comps,
        n_visited: s.dist_comps,
        n_routing_comps: 0,
        n_predicate_evals: s.predicate_evals,
        n_cbt_pulls: 0,
        n_one_hop: 0,
        n_two_hop: 0,
        n_low_sel_breaks: 0,
        elapsed,
    }
}

/// Workload labels copied into every CSV row.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RowLabels {
    pub mode: String,
    pub n_attrs: String,
    pub passrate: String,
}

impl RowLabels {
    pub fn from_workload(w: &Workload) -> Self {
        match &w.meta {
            Some(m) => Self {
                mode: m.mode.short().into(),
                n_attrs: m.n_attrs.to_string(),
                passrate: m.passrate.to_string(),
            },
            None => Self::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub strategy: Strategy,
    pub ef: usize,
    pub mean_recall: f64,
    pub mean_recall_truth: f64,
    pub qps: f64,
    pub mean_n_dist_comps: f64,
    pub mean_total_comps: f64,
    pub mean_n_predicate_evals: f64,
    pub labels: RowLabels,
}

/// Runs every query at every `ef`, single-threaded. Only the query loop is
/// timed.
#[allow(clippy::too_many_arguments)]
pub fn sweep(
    index: &CompassIndex,
    queries: &[FilteredQuery],
    truth: &GroundTruth,
    strategy: Strategy,
    schedule: &[usize],
    k: usize,
    knobs: &Knobs,
    labels: &RowLabels,
) -> Result<Vec<BenchRow>> {
    if truth.rows.len() != queries.len() {
        return Err(CompassError::InvalidInput(format!(
            "{} ground-truth rows for {} queries",
            truth.rows.len(),
            queries.len()
        )));
    }
    let nq = queries.len().max(1) as f64;
    let mut rows = Vec::with_capacity(schedule.len());
    for &ef in schedule {
        let config = knobs.config(k, ef);
        config.validate(k)?;
        let mut outcomes = Vec::with_capacity(queries.len());
        let start = Instant::now();
        for q in queries {
            outcomes.push(run_strategy(index, strategy, &q.vector, &q.predicate, k, &config)?);
        }
        let wall = start.elapsed().as_secs_f64();
        let (mut r_k, mut r_t, mut n_t) = (0.0, 0.0, 0usize);
        for (o, t) in outcomes.iter().zip(&truth.rows) {
            let truth_ids: Vec<u32> = t.iter().map(|r| r.id).collect();
            let ids = o.ids();
            r_k += recall_at_k(&ids, &truth_ids, k);
            if let Ok(r) = recall(&ids, &truth_ids) {
                r_t += r;
                n_t += 1;
            }
        }
        let mean = |f: fn(&QueryOutcome) -> u64| outcomes.iter().map(|o| f(o) as f64).sum::<f64>() / nq;
        rows.push(BenchRow {
            strategy,
            ef,
            mean_recall: r_k / nq,
            mean_recall_truth: if n_t == 0 { 1.0 } else { r_t / n_t as f64 },
            qps: queries.len() as f64 / wall.max(1e-9),
            mean_n_dist_comps: mean(|o| o.n_dist_comps),
            mean_total_comps: mean(|o| o.total_comps()),
            mean_n_predicate_evals: mean(|o| o.n_predicate_evals),
            labels: labels.clone(),
        });
    }
    Ok(rows)
}

pub fn write_csv(rows: &[BenchRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| CompassError::InvalidInput(e.to_string());
    w.write_record(CSV_COLUMNS).map_err(err)?;
    for r in rows {
        w.write_record([
            r.strategy.name().to_owned(),
            r.ef.to_string(),
            format!("{:.6}", r.mean_recall),
            format!("{:.6}", r.mean_recall_truth),
            format!("{:.1}", r.qps),
            format!("{:.1}", r.mean_n_dist_comps),
            format!("{:.1}", r.mean_total_comps),
            format!("{:.1}", r.mean_n_predicate_evals),
            r.labels.mode.clone(),
            r.labels.n_attrs.clone(),
            r.labels.passrate.clone(),
        ])
        .map_err(err)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Parser)]
#[command(name = "compass-bench", version, about = "Build, query and benchmark filtered vector indexes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic Gaussian-mixture dataset, attributes, queries and a workload.
    GenData(GenDataArgs),
    /// Compose a predicate workload over existing query vectors.
    Workload(WorkloadArgs),
    /// Build an index bundle.
    Build(BuildArgs),
    /// Compute (or reuse) exact filtered ground truth.
    Gt(GtArgs),
    /// Sweep ef and write a recall / QPS / #Comp CSV.
    Bench(BenchArgs),
    /// Run one query and print the result as JSON.
    Query(QueryArgs),
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Base vectors (.fvecs).
    #[arg(long)]
    data: PathBuf,
    /// Attribute CSV with a header row.
    #[arg(long)]
    attrs: PathBuf,
}

#[derive(Debug, Args)]
struct WorkloadShape {
    #[arg(long, default_value = "conj")]
    mode: String,
    #[arg(long, default_value_t = 1)]
    n_attrs: usize,
    /// Per-attribute passrate of each range.
    #[arg(long, default_value_t = 0.3)]
    passrate: f64,
    #[arg(long, default_value_t = 10)]
    k: usize,
}

#[derive(Debug, Args)]
struct GenDataArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = 200)]
    queries: usize,
    #[arg(long, default_value_t = 32)]
    dim: usize,
    /// Attributes per record.
    #[arg(long, default_value_t = 4)]
    m: usize,
    #[arg(long, default_value_t = 64)]
    components: usize,
    /// Per-coordinate standard deviation around each component center
    /// (centers have unit standard deviation).
    #[arg(long, default_value_t = 2.0)]
    spread: f32,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[command(flatten)]
    shape: WorkloadShape,
}

#[derive(Debug, Args)]
struct WorkloadArgs {
    /// Query vectors (.fvecs).
    #[arg(long)]
    queries: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[command(flatten)]
    shape: WorkloadShape,
}

#[derive(Debug, Args)]
struct BuildArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Output bundle path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long = "M", default_value_t = 16)]
    m: usize,
    #[arg(long, default_value_t = 200)]
    efc: usize,
    /// Number of clusters; defaults to ceil(n / 100).
    #[arg(long)]
    nlist: Option<usize>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Debug, Args)]
struct GtArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    workload: PathBuf,
    /// Query vectors for workloads that reference them by `query_id`.
    #[arg(long)]
    queries: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Overwrite an existing file computed for other inputs.
    #[arg(long)]
    force: bool,
}

#[derive(Debug, Args)]
struct KnobArgs {
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    delta_efs: Option<usize>,
    #[arg(long)]
    efi: Option<usize>,
}

impl KnobArgs {
    fn knobs(&self) -> Knobs {
        Knobs {
            alpha: self.alpha,
            beta: self.beta,
            delta_efs: self.delta_efs,
            efi: self.efi,
        }
    }
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    workload: PathBuf,
    #[arg(long)]
    queries: Option<PathBuf>,
    /// Ground truth from `gt`.
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// A single ef; shorthand for a one-entry schedule.
    #[arg(long, conflicts_with = "ef_schedule")]
    ef: Option<usize>,
    /// `a,b,c` or `start:end:step`; defaults to 10..1000.
    #[arg(long)]
    ef_schedule: Option<String>,
    /// Strategies to sweep, comma-separated.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "compass")]
    strategy: Vec<Strategy>,
    #[command(flatten)]
    knobs: KnobArgs,
    /// CSV output; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct QueryArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    index: PathBuf,
    /// Query vector as a JSON array.
    #[arg(long, conflicts_with = "workload")]
    vector: Option<String>,
    /// Predicate JSON; defaults to always-true.
    #[arg(long)]
    predicate: Option<String>,
    /// Take the query from this workload instead.
    #[arg(long)]
    workload: Option<PathBuf>,
    #[arg(long)]
    queries: Option<PathBuf>,
    /// Line of the workload to run.
    #[arg(long, default_value_t = 0)]
    query_index: usize,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 100)]
    ef: usize,
    #[arg(long, value_enum, default_value = "compass")]
    strategy: Strategy,
    #[command(flatten)]
    knobs: KnobArgs,
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code: 0 on success, 1 on usage errors, 2 on
/// data errors.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = if e.use_stderr() {
                write!(err, "{}", e.render())
            } else {
                write!(out, "{}", e.render())
            };
            return code;
        }
    };
    let result = match cli.command {
        Command::GenData(a) => cmd_gen_data(a, out),
        Command::Workload(a) => cmd_workload(a, out),
        Command::Build(a) => cmd_build(a, out),
        Command::Gt(a) => cmd_gt(a, out),
        Command::Bench(a) => cmd_bench(a, out),
        Command::Query(a) => cmd_query(a, out),
    };
    match result {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            1
        }
        Err(CliError::Data(e)) => {
            let _ = writeln!(err, "error: {e}");
            2
        }
    }
}

enum CliError {
    Usage(String),
    Data(CompassError),
}

impl From<CompassError> for CliError {
    fn from(e: CompassError) -> Self {
        match e {
            CompassError::InvalidConfig(msg) => CliError::Usage(msg),
            other => CliError::Data(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.into())
    }
}

type CliResult = std::result::Result<(), CliError>;

fn parse_mode(s: &str) -> std::result::Result<ComposeMode, CliError> {
    s.parse().map_err(|_| CliError::Usage(format!("--mode must be conj or disj, got '{s}'")))
}

fn check_shape(shape: &WorkloadShape, m: Option<usize>) -> std::result::Result<ComposeMode, CliError> {
    let mode = parse_mode(&shape.mode)?;
    if !(shape.passrate > 0.0 && shape.passrate <= 1.0) {
        return Err(CliError::Usage(format!("--passrate {} outside (0, 1]", shape.passrate)));
    }
    if shape.n_attrs == 0 || m.is_some_and(|m| shape.n_attrs > m) {
        return Err(CliError::Usage(format!("--n-attrs {} out of range", shape.n_attrs)));
    }
    if shape.k == 0 {
        return Err(CliError::Usage("--k must be at least 1".into()));
    }
    Ok(mode)
}

fn cmd_gen_data(a: GenDataArgs, out: &mut dyn Write) -> CliResult {
    let mode = check_shape(&a.shape, Some(a.m))?;
    if a.n == 0 || a.dim == 0 {
        return Err(CliError::Usage("--n and --dim must be positive".into()));
    }
    std::fs::create_dir_all(&a.out)?;
    let mut spec = MixtureSpec::new(a.n, a.queries, a.dim, a.seed);
    spec.components = a.components;
    spec.spread = a.spread;
    let (base, queries) = gaussian_mixture(&spec);
    let attrs = generate_attributes(a.n, a.m, a.seed ^ 0x5eed);
    write_fvecs(a.out.join("base.fvecs"), a.dim, &base)?;
    write_fvecs(a.out.join("queries.fvecs"), a.dim, &queries)?;
    write_attributes_csv(a.out.join("attrs.csv"), &crate::model::Schema::unit(a.m), &attrs)?;
    let w = compose_workload(&queries, a.dim, mode, a.shape.n_attrs, a.shape.passrate, a.shape.k, a.seed)?;
    write_workload(a.out.join("workload.jsonl"), &w)?;
    writeln!(
        out,
        "wrote {} base vectors, {} queries, {} attributes to {}",
        a.n,
        a.queries,
        a.m,
        a.out.display()
    )?;
    Ok(())
}

fn cmd_workload(a: WorkloadArgs, out: &mut dyn Write) -> CliResult {
    let mode = check_shape(&a.shape, None)?;
    let (dim, qv) = read_fvecs(&a.queries)?;
    let w = compose_workload(&qv, dim.max(1), mode, a.shape.n_attrs, a.shape.passrate, a.shape.k, a.seed)?;
    write_workload(&a.out, &w)?;
    writeln!(out, "wrote {} queries to {}", w.queries.len(), a.out.display())?;
    Ok(())
}

fn load_data(d: &DataArgs) -> Result<Dataset> {
    let (ds, dropped) = load_dataset(&d.data, &d.attrs)?;
    if dropped > 0 {
        eprintln!("warning: dropped {dropped} duplicate vectors");
    }
    Ok(ds)
}

fn load_workload(path: &Path, queries: Option<&PathBuf>) -> Result<Workload> {
    let qv = queries.map(read_fvecs).transpose()?;
    read_workload(path, qv.as_ref().map(|(d, v)| (*d, v.as_slice())))
}

fn cmd_build(a: BuildArgs, out: &mut dyn Write) -> CliResult {
    let ds = load_data(&a.data)?;
    let n = ds.len();
    let nlist = a.nlist.unwrap_or_else(|| n.div_ceil(100).max(1));
    if a.m < 2 || a.efc == 0 || nlist == 0 || nlist > n {
        return Err(CliError::Usage(format!(
            "invalid build parameters: M = {}, efc = {}, nlist = {nlist} for n = {n}",
            a.m, a.efc
        )));
    }
    let params = IndexParams {
        graph: GraphBuildParams {
            m: a.m,
            efc: a.efc,
            seed: a.seed,
        },
        clusters: ClusterParams::new(nlist, a.seed.wrapping_add(1)),
    };
    let start = Instant::now();
    let index = CompassIndex::build(ds, params)?;
    let bundle = IndexBundle::from_index(&index);
    let bytes = bundle.to_bytes();
    std::fs::write(&a.out, &bytes)?;
    writeln!(out, "built n = {n} in {:.2}s, dataset {}", start.elapsed().as_secs_f64(), hex(&bundle.header.dataset_hash))?;
    writeln!(out, "{:<16} {:>14}", "section", "bytes")?;
    writeln!(out, "{:<16} {:>14}", "header", HEADER_LEN)?;
    for s in bundle.section_sizes() {
        writeln!(out, "{:<16} {:>14}", s.name, s.bytes)?;
    }
    writeln!(out, "{:<16} {:>14}", "total", bytes.len())?;
    Ok(())
}

fn cmd_gt(a: GtArgs, out: &mut dyn Write) -> CliResult {
    let ds = load_data(&a.data)?;
    let w = load_workload(&a.workload, a.queries.as_ref())?;
    let queries = with_k(w.queries, a.k, &ds)?;
    if a.out.exists() && !a.force {
        let cached = GroundTruth::load(&a.out)?;
        cached.check_binding(&ds, &queries, a.k)?;
        writeln!(out, "ground truth up to date: {}", a.out.display())?;
        return Ok(());
    }
    let gt = GroundTruth::compute(&ds, &queries, a.k);
    gt.save(&a.out)?;
    let short = gt.rows.iter().filter(|r| r.len() < a.k).count();
    writeln!(out, "wrote ground truth for {} queries ({short} with fewer than k passing) to {}", queries.len(), a.out.display())?;
    Ok(())
}

/// Applies `k` to every query and validates against the dataset.
fn with_k(queries: Vec<FilteredQuery>, k: usize, ds: &Dataset) -> Result<Vec<FilteredQuery>> {
    queries
        .into_iter()
        .map(|mut q| {
            q.k = k;
            q.validate(ds)?;
            Ok(q)
        })
        .collect()
}

fn load_index(data: &DataArgs, index: &Path) -> Result<CompassIndex> {
    let ds = load_data(data)?;
    IndexBundle::load(index)?.into_index(ds)
}

fn cmd_bench(a: BenchArgs, out: &mut dyn Write) -> CliResult {
    let schedule = match (&a.ef, &a.ef_schedule) {
        (Some(ef), _) => vec![*ef],
        (None, Some(s)) => parse_ef_schedule(s).map_err(|e| CliError::Usage(e.to_string()))?,
        (None, None) => default_ef_schedule(),
    };
    if let Some(&bad) = schedule.iter().find(|&&ef| ef < a.k) {
        return Err(CliError::Usage(format!("ef {bad} is smaller than k {}", a.k)));
    }
    let index = load_index(&a.data, &a.index)?;
    let w = load_workload(&a.workload, a.queries.as_ref())?;
    let labels = RowLabels::from_workload(&w);
    let queries = with_k(w.queries, a.k, index.dataset())?;
    if !a.gt.exists() {
        return Err(CliError::Data(CompassError::InvalidInput(format!(
            "ground truth {} not found; run `gt` first",
            a.gt.display()
        ))));
    }
    let truth = GroundTruth::load(&a.gt)?;
    truth.check_binding(index.dataset(), &queries, a.k)?;
    let knobs = a.knobs.knobs();
    knobs.config(a.k, schedule[0]).validate(a.k)?;
    let mut rows = Vec::new();
    for &s in &a.strategy {
        rows.extend(sweep(&index, &queries, &truth, s, &schedule, a.k, &knobs, &labels)?);
    }
    match &a.out {
        Some(path) => write_csv(&rows, std::fs::File::create(path)?)?,
        None => write_csv(&rows, &mut *out)?,
    }
    Ok(())
}

fn cmd_query(a: QueryArgs, out: &mut dyn Write) -> CliResult {
    let index = load_index(&a.data, &a.index)?;
    let (vector, predicate) = match (&a.vector, &a.workload) {
        (Some(v), _) => {
            let vector: Vec<f32> =
                serde_json::from_str(v).map_err(|e| CliError::Usage(format!("--vector is not a JSON array of numbers: {e}")))?;
            let predicate = match &a.predicate {
                Some(p) => Predicate::from_json_str(p)?,
                None => Predicate::True,
            };
            (vector, predicate)
        }
        (None, Some(path)) => {
            let w = load_workload(path, a.queries.as_ref())?;
            let q = w.queries.into_iter().nth(a.query_index).ok_or_else(|| {
                CliError::Usage(format!("--query-index {} beyond the workload", a.query_index))
            })?;
            let predicate = match &a.predicate {
                Some(p) => Predicate::from_json_str(p)?,
                None => q.predicate,
            };
            (q.vector, predicate)
        }
        (None, None) => return Err(CliError::Usage("give --vector or --workload".into())),
    };
    let config = a.knobs.knobs().config(a.k, a.ef);
    config.validate(a.k)?;
    let o = run_strategy(&index, a.strategy, &vector, &predicate, a.k, &config)?;
    let report = json!({
        "strategy": a.strategy.name(),
        "dataset_hash": hex(&dataset_hash(index.dataset())),
        "predicate": predicate.to_json(),
        "k": a.k,
        "ef": a.ef,
        "ids": o.ids(),
        "dists": o.results.iter().map(|r| r.dist).collect::<Vec<_>>(),
        "n_dist_comps": o.n_dist_comps,
        "n_visited": o.n_visited,
        "n_routing_comps": o.n_routing_comps,
        "n_predicate_evals": o.n_predicate_evals,
        "n_cbt_pulls": o.n_cbt_pulls,
        "n_one_hop": o.n_one_hop,
        "n_two_hop": o.n_two_hop,
        "n_low_sel_breaks": o.n_low_sel_breaks,
        "elapsed_us": o.elapsed.as_micros() as u64,
    });
    writeln!(out, "{}", serde_json::to_string_pretty(&report).expect("serializable"))?;
    Ok(())
}
