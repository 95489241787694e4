mod config;

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde_json::json;
use sktree::eval::{cross_validate, dataset_median_bandwidth, generate_synthetic, roc_csv, EvalReport, ExperimentConfig, Profile};
use sktree::ingest::{build_process_trees, open_input, parse_events, FeaturizationConfig, LabeledDataset, MaliciousRoots};
use sktree::signature::{BaseKernel, PdeGrid, Scheme};
use sktree::svm::train;
use sktree::tree_kernel::{content_id, mmd_matrix, BlockCache, Estimator, GramMatrix, MmdConfig};

use config::FileConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] sktree::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("config: {0}")]
    Config(#[from] toml::de::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    fn kind(&self) -> &'static str {
        use sktree::Error as E;
        match self {
            CliError::Core(e) => match e {
                E::EmptyDataset => "empty_dataset",
                E::SingleClass(_) => "single_class",
                E::Stratification(_) => "stratification",
                E::NotPsd { .. } => "not_psd",
                E::NonFiniteKernel { .. } => "non_finite_kernel",
                E::NotConverged(_) => "not_converged",
                E::InvalidParameter(_) => "invalid_parameter",
                E::Io(_) => "io",
                E::Json(_) | E::Format(_) => "format",
                _ => "invalid_input",
            },
            CliError::Io(_) => "io",
            CliError::Config(_) => "config",
            CliError::Json(_) => "format",
            CliError::Usage(_) => "usage",
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser)]
#[command(name = "sktree", version, about = "Signature-kernel classification of process-tree event logs")]
struct Cli {
    /// TOML file with `[experiment]` and `[ingest]` tables.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build labelled streaming trees from an event log.
    Ingest(IngestArgs),
    /// Compute the tree-kernel Gram matrix of a dataset.
    Gram(GramArgs),
    /// Fit an SVM on a saved Gram matrix.
    Train(TrainArgs),
    /// Cross-validated grid search and AUROC report.
    Evaluate(Box<EvaluateArgs>),
    /// Generate a synthetic labelled dataset.
    Synth(SynthArgs),
    /// Summarise a saved evaluation report.
    Report(ReportArgs),
}

#[derive(Args)]
struct IngestFlags {
    /// Newline-delimited JSON events, optionally gzipped; `-` for stdin.
    #[arg(long)]
    events: Option<PathBuf>,
    /// Malicious root process ids, one per line.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    window_seconds: Option<f64>,
    #[arg(long)]
    min_events: Option<usize>,
    #[arg(long)]
    max_events: Option<usize>,
    #[arg(long)]
    no_normalize: bool,
}

#[derive(Args)]
struct IngestArgs {
    #[command(flatten)]
    flags: IngestFlags,
    #[arg(long, default_value = "dataset.jsonl")]
    out: PathBuf,
}

#[derive(Args)]
struct KernelFlags {
    #[arg(long, value_parser = parse_estimator)]
    estimator: Option<Estimator>,
    /// Dyadic subdivisions of each knot interval in the PDE grid.
    #[arg(long)]
    refinement: Option<u32>,
    #[arg(long, value_parser = parse_scheme)]
    scheme: Option<Scheme>,
    /// Keep negative squared MMD estimates instead of clamping them to zero.
    #[arg(long)]
    no_clamp: bool,
    /// Block cache directory; defaults to $SKTREE_CACHE_DIR.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

#[derive(Args)]
struct GramArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    sigma: f64,
    /// Absolute RBF bandwidth.
    #[arg(long, conflicts_with = "bandwidth_scale")]
    bandwidth: Option<f64>,
    /// Multiple of the median-heuristic bandwidth.
    #[arg(long, default_value_t = 1.0)]
    bandwidth_scale: f64,
    #[command(flatten)]
    kernel: KernelFlags,
    #[arg(long, default_value = "gram.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    gram: PathBuf,
    /// Dataset the Gram matrix was computed from; supplies labels.
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long = "C", alias = "c", default_value_t = 1.0)]
    c: f64,
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
    #[arg(long, default_value = "model.json")]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Dataset from `ingest` or `synth`.
    #[arg(long, conflicts_with = "events")]
    dataset: Option<PathBuf>,
    #[command(flatten)]
    ingest: IngestFlags,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    inner_folds: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    sigma_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    bandwidth_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    bandwidth_scales: Option<Vec<f64>>,
    #[arg(long = "C-grid", alias = "c-grid", value_delimiter = ',')]
    c_grid: Option<Vec<f64>>,
    #[command(flatten)]
    kernel: KernelFlags,
    #[arg(long)]
    report: Option<PathBuf>,
    /// ROC points CSV; defaults to the report path with a `.roc.csv` suffix.
    #[arg(long)]
    roc: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Trees per class.
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "separable")]
    profile: Profile,
    #[arg(long, default_value = "dataset.jsonl")]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long, default_value = "report.json")]
    report: PathBuf,
    /// Also write the pooled ROC points here.
    #[arg(long)]
    roc: Option<PathBuf>,
}

fn parse_estimator(s: &str) -> std::result::Result<Estimator, String> {
    serde_json::from_value(json!(s)).map_err(|_| format!("unknown estimator {s:?} (unbiased, biased, algorithm1-literal)"))
}

fn parse_scheme(s: &str) -> std::result::Result<Scheme, String> {
    serde_json::from_value(json!(s)).map_err(|_| format!("unknown scheme {s:?} (first-order, second-order)"))
}

fn read_dataset(path: &Path) -> Result<LabeledDataset> {
    let file = File::open(path).map_err(|e| CliError::Usage(format!("opening dataset {}: {e}", path.display())))?;
    Ok(LabeledDataset::read_jsonl(BufReader::new(file))?)
}

fn write_dataset(path: &Path, ds: &LabeledDataset) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    ds.write_jsonl(&mut out)?;
    out.flush()?;
    Ok(())
}

fn print(value: &serde_json::Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn open_cache(flag: Option<&PathBuf>, file: Option<&PathBuf>) -> Result<Option<BlockCache>> {
    Ok(config::cache_dir(flag, file).map(BlockCache::open).transpose()?)
}

fn run_ingest(flags: &IngestFlags, file: &FileConfig) -> Result<(LabeledDataset, serde_json::Value)> {
    let events_path = flags.events.as_ref().ok_or_else(|| CliError::Usage("--events is required".into()))?;
    let mut cfg: FeaturizationConfig = file.ingest.clone();
    if let Some(w) = flags.window_seconds {
        cfg.window_seconds = w;
    }
    if let Some(m) = flags.min_events {
        cfg.min_events = m;
    }
    if let Some(m) = flags.max_events {
        cfg.max_events = m;
    }
    if flags.no_normalize {
        cfg.normalize = false;
    }
    let report = parse_events(open_input(events_path)?)?;
    for issue in report.issues.iter().take(20) {
        warn!("line {}: {:?}: {}", issue.line, issue.kind, issue.message);
    }
    let malicious = match &flags.labels {
        Some(p) => MaliciousRoots::parse(&fs::read_to_string(p)?),
        None => MaliciousRoots::default(),
    };
    let out = build_process_trees(&report.events, &malicious, &cfg)?;
    let summary = json!({
        "malformed_lines": report.malformed(),
        "skipped_events": report.skipped(),
        "stats": out.stats,
        "class_counts": out.dataset.class_counts(),
    });
    Ok((out.dataset, summary))
}

fn mmd_config(kernel: &KernelFlags, exp: &ExperimentConfig, bandwidth: f64) -> Result<MmdConfig> {
    let grid = PdeGrid::with_scheme(kernel.refinement.unwrap_or(exp.refinement), kernel.scheme.unwrap_or(exp.scheme))?;
    Ok(MmdConfig::new(BaseKernel::rbf(bandwidth)?)
        .with_estimator(kernel.estimator.unwrap_or(exp.estimator))
        .with_clamp(exp.clamp_negative && !kernel.no_clamp)
        .with_grid(grid))
}

fn gram_cmd(args: &GramArgs, file: &FileConfig) -> Result<()> {
    let started = Instant::now();
    let ds = read_dataset(&args.dataset)?;
    if ds.is_empty() {
        return Err(sktree::Error::EmptyDataset.into());
    }
    let bandwidth = match args.bandwidth {
        Some(b) => b,
        None => args.bandwidth_scale * dataset_median_bandwidth(&ds.trees),
    };
    let config = mmd_config(&args.kernel, &file.experiment, bandwidth)?;
    let cache = open_cache(args.kernel.cache_dir.as_ref(), file.experiment.cache_dir.as_ref())?;
    let mmd = mmd_matrix(&ds.trees, &config, cache.as_ref())?;
    let gram = GramMatrix::from_mmd(&mmd, args.sigma)?;
    gram.save(&args.out)?;
    print(&json!({
        "out": args.out,
        "trees": gram.len(),
        "sigma": args.sigma,
        "bandwidth": bandwidth,
        "min_eigenvalue": gram.min_eigenvalue(),
        "config_hash": config.hash(),
        "cache_hits": cache.as_ref().map(BlockCache::hits),
        "cache_misses": cache.as_ref().map(BlockCache::misses),
        "seconds": started.elapsed().as_secs_f64(),
    }))
}

fn train_cmd(args: &TrainArgs) -> Result<()> {
    let gram = GramMatrix::load(&args.gram)?;
    let ds = read_dataset(&args.dataset)?;
    if ds.is_empty() {
        return Err(sktree::Error::EmptyDataset.into());
    }
    let ids: Vec<String> = ds.trees.iter().map(content_id).collect();
    if ids != gram.tree_ids {
        return Err(CliError::Usage("dataset trees do not match the Gram matrix".into()));
    }
    let repaired = gram.psd_repaired();
    if repaired.psd_shift > gram.psd_shift {
        info!("diagonal shifted by {:.3e} for positive semidefiniteness", repaired.psd_shift - gram.psd_shift);
    }
    let model = train(&repaired, &ds.labels, args.c, args.tol)?;
    model.save(&args.out)?;
    let train_scores: Vec<f64> = (0..ds.len())
        .map(|i| model.decision(repaired.values.row(i).iter().copied().collect::<Vec<_>>().as_slice()))
        .collect::<sktree::Result<_>>()?;
    let train_auroc = sktree::eval::auroc(&train_scores, &ds.labels).ok();
    print(&json!({
        "out": args.out,
        "support_vectors": model.support_indices.len(),
        "bias": model.bias,
        "iterations": model.iterations,
        "psd_shift": repaired.psd_shift,
        "train_auroc": train_auroc,
    }))
}

fn experiment(args: &EvaluateArgs, file: &FileConfig) -> ExperimentConfig {
    let mut exp = file.experiment.clone();
    if let Some(v) = args.folds {
        exp.folds = v;
    }
    if let Some(v) = args.inner_folds {
        exp.inner_folds = v;
    }
    if let Some(v) = args.seed {
        exp.seed = v;
    }
    if let Some(v) = &args.sigma_grid {
        exp.sigma_grid = v.clone();
    }
    if let Some(v) = &args.bandwidth_scales {
        exp.bandwidth_scales = v.clone();
        exp.bandwidth_grid = None;
    }
    if let Some(v) = &args.bandwidth_grid {
        exp.bandwidth_grid = Some(v.clone());
    }
    if let Some(v) = &args.c_grid {
        exp.c_grid = v.clone();
    }
    if let Some(v) = args.kernel.estimator {
        exp.estimator = v;
    }
    if let Some(v) = args.kernel.refinement {
        exp.refinement = v;
    }
    if let Some(v) = args.kernel.scheme {
        exp.scheme = v;
    }
    exp.clamp_negative &= !args.kernel.no_clamp;
    if args.dataset.is_some() {
        exp.dataset = args.dataset.clone();
    }
    if args.kernel.cache_dir.is_some() {
        exp.cache_dir = args.kernel.cache_dir.clone();
    }
    if args.report.is_some() {
        exp.report = args.report.clone();
    }
    exp
}

fn evaluate_cmd(args: &EvaluateArgs, file: &FileConfig) -> Result<()> {
    let exp = experiment(args, file);
    exp.validate()?;
    let ds = if args.ingest.events.is_some() {
        run_ingest(&args.ingest, file)?.0
    } else {
        let path = exp.dataset.clone().ok_or_else(|| CliError::Usage("--dataset or --events is required".into()))?;
        read_dataset(&path)?
    };
    let cache = open_cache(exp.cache_dir.as_ref(), None)?;
    let report = cross_validate(&ds, &exp, cache.as_ref())?;
    let report_path = exp.report.clone().unwrap_or_else(|| PathBuf::from("report.json"));
    fs::write(&report_path, serde_json::to_string_pretty(&report)?)?;
    let roc_path = args.roc.clone().unwrap_or_else(|| report_path.with_extension("roc.csv"));
    fs::write(&roc_path, roc_csv(&report.roc))?;
    print(&json!({
        "report": report_path,
        "roc": roc_path,
        "fold_auroc": report.fold_auroc,
        "mean_auroc": report.mean_auroc,
        "std_auroc": report.std_auroc,
        "seconds": report.timings.total_seconds,
    }))
}

fn synth_cmd(args: &SynthArgs) -> Result<()> {
    let s = generate_synthetic(args.n, args.seed, args.profile)?;
    write_dataset(&args.out, &s.dataset)?;
    if s.too_small_for_cv {
        warn!("{} trees per class is too few for default cross-validation", args.n);
    }
    print(&json!({
        "out": args.out,
        "profile": s.profile,
        "seed": s.seed,
        "too_small_for_cv": s.too_small_for_cv,
        "summary": sktree::eval::DatasetSummary::of(&s.dataset),
    }))
}

fn report_cmd(args: &ReportArgs) -> Result<()> {
    let text = fs::read_to_string(&args.report)?;
    let report: EvalReport = serde_json::from_str(&text)?;
    println!("trees          {}", report.dataset.trees);
    println!(
        "classes        {} benign / {} malicious",
        report.dataset.classes[0].count, report.dataset.classes[1].count
    );
    println!("folds          {} outer (stratified), {} inner", report.config.folds, report.config.inner_folds);
    println!("AUROC          {:.4} ± {:.4}", report.mean_auroc, report.std_auroc);
    for f in &report.folds {
        println!(
            "  fold {}  {:.4}  sigma={} bandwidth={:.4} C={} (inner {:.4})",
            f.fold, f.auroc, f.chosen.sigma, f.chosen.bandwidth, f.chosen.c, f.chosen.inner_auroc
        );
    }
    let leaked: usize = report.audit.iter().map(|a| a.selection_test_rows).sum();
    println!("test rows read during selection: {leaked}");
    println!("config hash    {}", report.config_hash);
    println!("wall clock     {:.1}s", report.timings.total_seconds);
    if let Some(roc) = &args.roc {
        fs::write(roc, roc_csv(&report.roc))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let file = FileConfig::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Ingest(args) => {
            let (ds, summary) = run_ingest(&args.flags, &file)?;
            write_dataset(&args.out, &ds)?;
            print(&summary)
        }
        Command::Gram(args) => gram_cmd(args, &file),
        Command::Train(args) => train_cmd(args),
        Command::Evaluate(args) => evaluate_cmd(args, &file),
        Command::Synth(args) => synth_cmd(args),
        Command::Report(args) => report_cmd(args),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", json!({ "error": e.to_string(), "kind": e.kind() }));
            ExitCode::FAILURE
        }
    }
}
