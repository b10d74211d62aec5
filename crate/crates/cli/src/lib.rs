//! Command-line front end: `score`, `benchmark`, `stability` and `synth`.
//!
//! Exit codes: 0 on success, 1 on a runtime failure, 2 on bad usage.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use hybrid_anomaly::baselines::Method;
use hybrid_anomaly::data::{load_dataset, FeatureMatrix, FeatureSchema};
use hybrid_anomaly::eval::{benchmark, stability_experiment, EvalConfig, EvalReport};
use hybrid_anomaly::scoring::{score_pipeline, ScoreConfig};
use hybrid_anomaly::synth::{gaussian_blobs, SynthParams};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "hybrid-anomaly",
    version,
    about = "Unsupervised random-forest / graph-density anomaly detection"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score every row of a CSV and flag anomalies.
    Score(ScoreArgs),
    /// AUC of each method against a 0/1 label column.
    Benchmark(BenchArgs),
    /// AUC across subsample fractions and seeds.
    Stability(StabilityArgs),
    /// Write a labelled Gaussian-blob dataset.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    pub input: PathBuf,
    /// Optional schema file (`name,NUMERIC|CATEGORICAL` per line).
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Number of trees in the forest.
    #[arg(long, default_value_t = 100)]
    pub trees: usize,
    /// Neighbours per node in the KNN graph; 0 means ceil(ln N).
    #[arg(long, default_value_t = 0)]
    pub k: usize,
    /// Percentile of within-cluster distances used as the density cutoff.
    #[arg(long = "dc-percentile", default_value_t = 20.0)]
    pub dc_percentile: f64,
    /// z multiplier of the log-space threshold.
    #[arg(long, default_value_t = 2.5)]
    pub z: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Column to drop before scoring (e.g. a ground-truth label).
    #[arg(long = "label-col")]
    pub label_col: Option<String>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// 0/1 ground-truth column, 1 = anomaly.
    #[arg(long = "label-col")]
    pub label_col: String,
    /// Comma-separated subset of hybrid, iforest, knn, lof.
    #[arg(long, value_delimiter = ',', default_value = "hybrid")]
    pub methods: Vec<String>,
    /// Record wall-clock seconds per job (makes the output non-reproducible).
    #[arg(long)]
    pub timings: bool,
}

#[derive(Debug, Args)]
pub struct StabilityArgs {
    #[command(flatten)]
    pub bench: BenchArgs,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.5,1.0")]
    pub fractions: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
    pub seeds: Vec<u64>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 2)]
    pub clusters: usize,
    #[arg(long = "per-cluster", default_value_t = 150)]
    pub per_cluster: usize,
    #[arg(long, default_value_t = 10)]
    pub outliers: usize,
    #[arg(long, default_value_t = 8)]
    pub dims: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<hybrid_anomaly::Error> for CliError {
    fn from(e: hybrid_anomaly::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<hybrid_anomaly::data::DataError> for CliError {
    fn from(e: hybrid_anomaly::data::DataError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

type CliResult<T = ()> = Result<T, CliError>;

impl CommonArgs {
    fn config(&self) -> CliResult<ScoreConfig> {
        let config = ScoreConfig {
            trees: self.trees,
            k: self.k,
            dc_percentile: self.dc_percentile,
            z: self.z,
            seed: self.seed,
            ..ScoreConfig::default()
        };
        config
            .validate()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(config)
    }

    fn load(&self) -> CliResult<FeatureMatrix> {
        let hint = match &self.schema {
            Some(p) => Some(FeatureSchema::from_file(p)?),
            None => None,
        };
        Ok(load_dataset(&self.input, hint.as_ref())?)
    }
}

impl BenchArgs {
    fn methods(&self) -> CliResult<Vec<Method>> {
        if self.methods.is_empty() {
            return Err(CliError::Usage("no methods given".into()));
        }
        self.methods
            .iter()
            .map(|m| m.trim().parse().map_err(CliError::Usage))
            .collect()
    }

    fn eval_config(&self) -> CliResult<EvalConfig> {
        Ok(EvalConfig {
            score: self.common.config()?,
            ..EvalConfig::default()
        })
    }

    fn load_labeled(&self) -> CliResult<(FeatureMatrix, Vec<u8>)> {
        Ok(self.common.load()?.split_label(&self.label_col)?)
    }
}

fn write_file(path: &Path, contents: &str) -> CliResult {
    fs::write(path, contents)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn out_dir(dir: &Path) -> CliResult<&Path> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

pub fn cmd_score(args: &ScoreArgs) -> CliResult {
    let config = args.common.config()?;
    let mut x = args.common.load()?;
    if let Some(col) = &args.label_col {
        x = x.without_column(col)?;
    }
    let report = score_pipeline(&x, &config)?;
    let dir = out_dir(&args.common.out)?;
    write_file(&dir.join("scores.csv"), &report.to_csv())?;
    write_file(&dir.join("summary.json"), &report.summary_json())?;
    eprintln!(
        "scored {} points: {} clusters, threshold {:.6}, {} flagged",
        report.n,
        report.clustering.len(),
        report.threshold,
        report.flagged_count()
    );
    Ok(())
}

fn write_report(dir: &Path, stem: &str, report: &EvalReport) -> CliResult {
    let dir = out_dir(dir)?;
    write_file(&dir.join(format!("{stem}.csv")), &report.to_csv())?;
    write_file(
        &dir.join(format!("{stem}_summary.json")),
        &report.summary_json(),
    )
}

pub fn cmd_benchmark(args: &BenchArgs) -> CliResult {
    let config = args.eval_config()?;
    let methods = args.methods()?;
    let (x, labels) = args.load_labeled()?;
    let report = benchmark(&x, &labels, &methods, &config, args.timings)?;
    write_report(&args.common.out, "benchmark", &report)?;
    for row in &report.rows {
        eprintln!("{:<8} auc {:.4}", row.method, row.auc.unwrap_or(f64::NAN));
    }
    Ok(())
}

pub fn cmd_stability(args: &StabilityArgs) -> CliResult {
    let config = args.bench.eval_config()?;
    let methods = args.bench.methods()?;
    if args.fractions.is_empty() || args.seeds.is_empty() {
        return Err(CliError::Usage(
            "fractions and seeds must be non-empty".into(),
        ));
    }
    if let Some(f) = args.fractions.iter().find(|&&f| !(f > 0.0 && f <= 1.0)) {
        return Err(CliError::Usage(format!("fraction {f} outside (0, 1]")));
    }
    let (x, labels) = args.bench.load_labeled()?;
    let report = stability_experiment(
        &x,
        &labels,
        &args.fractions,
        &args.seeds,
        &methods,
        &config,
        args.bench.timings,
    )?;
    write_report(&args.bench.common.out, "stability", &report)?;
    for agg in report.aggregates() {
        eprintln!(
            "{:<8} fraction {:<4} auc {:.4} ± {:.4}",
            agg.method,
            agg.fraction,
            agg.mean_auc.unwrap_or(f64::NAN),
            agg.std_auc.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}

pub fn cmd_synth(args: &SynthArgs) -> CliResult {
    if args.clusters == 0 || args.per_cluster == 0 || args.dims == 0 {
        return Err(CliError::Usage(
            "--clusters, --per-cluster and --dims must be at least 1".into(),
        ));
    }
    let blobs = gaussian_blobs(&SynthParams {
        clusters: args.clusters,
        per_cluster: args.per_cluster,
        outliers: args.outliers,
        dims: args.dims,
        seed: args.seed,
    })
    .map_err(|e| CliError::Usage(e.to_string()))?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        out_dir(parent)?;
    }
    write_file(&args.out, &blobs.to_csv())
}

pub fn execute(cli: &Cli) -> CliResult {
    match &cli.command {
        Command::Score(a) => cmd_score(a),
        Command::Benchmark(a) => cmd_benchmark(a),
        Command::Stability(a) => cmd_stability(a),
        Command::Synth(a) => cmd_synth(a),
    }
}

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
