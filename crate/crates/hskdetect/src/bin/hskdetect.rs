//! Command-line front end: `test` runs the heteroskedasticity test on a
//! CSV file, `simulate` drives the Monte Carlo harness, `quantile` prints
//! critical values. Machine-readable output goes to stdout, human
//! summaries to stderr. Exit codes: 0 success, 1 runtime error, 2 usage
//! error. `HSK_THREADS` caps worker parallelism (0 or unset = automatic).

use std::io::{Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use hskdetect::bootstrap::{BootstrapConfig, Smoothing};
use hskdetect::data::{self, CsvSchema, Dataset};
use hskdetect::empirical::{self, QuantileSource, TestConfig};
use hskdetect::kernel::KernelSpec;
use hskdetect::locpoly::{BandwidthRule, SmootherConfig};
use hskdetect::nulldist::{self, SeriesPolicy};
use hskdetect::simulate::{
    self, published_critical_value, DetectionId, ExampleId, QuantilePolicy, ScenarioSpec,
    TableOptions,
};
use hskdetect::DetectionFunction;

#[derive(Parser)]
#[command(
    name = "hskdetect",
    version,
    about = "Tests for heteroskedasticity in nonparametric regression",
    long_about = "Tests the hypothesis of a constant error scale in nonparametric \
                  regression using weighted residual empirical processes. Responses \
                  missing at random are handled by complete-case analysis. \
                  Machine-readable results go to stdout, summaries to stderr."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the test on a CSV file and emit a JSON outcome
    Test(TestArgs),
    /// Monte Carlo studies: reproduce reference tables or run one scenario
    Simulate(SimulateArgs),
    /// Print the critical value b_alpha of the test statistic
    Quantile(QuantileArgs),
}

#[derive(Args)]
struct TestArgs {
    /// CSV input file with a header row; use - for standard input
    #[arg(long)]
    input: String,
    /// Comma-separated covariate column names
    #[arg(long, value_delimiter = ',', required = true)]
    x: Vec<String>,
    /// Response column name
    #[arg(long)]
    y: String,
    /// Missingness indicator column (1 = observed, 0 = missing)
    #[arg(long)]
    delta: Option<String>,
    /// Local polynomial degree
    #[arg(long, default_value_t = 1)]
    degree: u32,
    /// Detection function: "estimated", a builtin name (omega1_ex2,
    /// omega2_ex2, remark1) or a CSV column of the input file
    #[arg(long, default_value = "estimated")]
    omega: String,
    /// Test level
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Bandwidth policy: "cv" or a fixed proportionality constant
    #[arg(long, conflicts_with = "cv_grid")]
    bandwidth: Option<String>,
    /// Comma-separated grid of constants for cross-validation
    #[arg(long, value_delimiter = ',')]
    cv_grid: Option<Vec<f64>>,
    /// Kernel: "auto", "epanechnikov", "tricube" or "smooth:p"
    #[arg(long, default_value = "auto")]
    kernel: String,
    /// Hoelder exponent gamma in the bandwidth rate n^(-1/(2(degree + gamma)))
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Bootstrap replications; switches the critical value to the smooth
    /// residual bootstrap
    #[arg(long, conflicts_with = "critical")]
    bootstrap: Option<usize>,
    /// Seed for the bootstrap resampling streams
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Bootstrap smoothing scale: "auto" or a positive value
    #[arg(long, default_value = "auto")]
    smoothing: String,
    /// Critical value: "published" (series threshold 1.1779 at 5%),
    /// "exact" (quantile of sup |B0|) or a number
    #[arg(long, default_value = "published")]
    critical: String,
    /// Write a per-row CSV (covariates, response, fitted, residual,
    /// weight) to this path
    #[arg(long)]
    dump_residuals: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Reference tables to reproduce, comma separated (1-5)
    #[arg(long, value_delimiter = ',')]
    table: Option<Vec<u8>>,
    /// Monte Carlo replications per cell
    #[arg(long, default_value_t = 1000)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Cross-validate bandwidths on a few probe replications only and
    /// freeze the median constants
    #[arg(long)]
    fast: bool,
    /// Bootstrap replications: with --table, also reproduce the bootstrap
    /// columns of tables 1 and 2; with --quantile bootstrap, the B to use
    #[arg(long)]
    bootstrap: Option<usize>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Scenario mode: which simulated design to draw from
    #[arg(long, value_enum, conflicts_with = "table")]
    example: Option<ExampleArg>,
    /// Scenario mode: scale-function index (0..=3 for ex1, 0..=2 for ex2)
    #[arg(long, default_value_t = 0, conflicts_with = "table")]
    scale: u8,
    /// Scenario mode: sample size
    #[arg(long, conflicts_with = "table")]
    n: Option<usize>,
    /// Scenario mode: detection function
    #[arg(long, value_enum, default_value_t = DetectionArg::Estimated, conflicts_with = "table")]
    detection: DetectionArg,
    /// Scenario mode: generate responses missing at random (ex1 only)
    #[arg(long, conflicts_with = "table")]
    missing: bool,
    /// Scenario mode: test level
    #[arg(long, default_value_t = 0.05, conflicts_with = "table")]
    alpha: f64,
    /// Scenario mode: critical value policy
    #[arg(long, value_enum, default_value_t = QuantileArg::Published, conflicts_with = "table")]
    quantile: QuantileArg,
}

#[derive(Args)]
struct QuantileArgs {
    /// Test level
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Print the exact quantile of sup |B0| instead of the published
    /// series threshold
    #[arg(long)]
    exact: bool,
    /// Emit a JSON object instead of the bare number
    #[arg(long)]
    json: bool,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Tsv,
}

#[derive(Copy, Clone, ValueEnum)]
enum ExampleArg {
    Ex1,
    Ex2,
    Remark1,
}

#[derive(Copy, Clone, ValueEnum)]
enum DetectionArg {
    Estimated,
    Omega1Ex2,
    Omega2Ex2,
    Remark1,
}

#[derive(Copy, Clone, ValueEnum)]
enum QuantileArg {
    Published,
    Exact,
    Bootstrap,
}

enum CliError {
    Usage(String),
    Runtime(String),
}

impl From<hskdetect::Error> for CliError {
    fn from(e: hskdetect::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        // Prints the message and exits: 2 for usage errors, 0 for
        // --help/--version.
        Err(e) => e.exit(),
    };
    if let Err(msg) = init_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(2);
    }
    let result = match cli.command {
        Command::Test(args) => cmd_test(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Quantile(args) => cmd_quantile(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn init_threads() -> Result<(), String> {
    let raw = match std::env::var("HSK_THREADS") {
        Ok(v) => v,
        Err(_) => return Ok(()),
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| format!("HSK_THREADS must be a nonnegative integer, got {raw:?}"))?;
    if n == 0 {
        return Ok(());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn read_input(path: &str) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    if path == "-" {
        std::io::stdin().read_to_end(&mut buf)?;
    } else {
        buf = std::fs::read(path)
            .map_err(|e| CliError::Runtime(format!("cannot read {path:?}: {e}")))?;
    }
    Ok(buf)
}

/// Pulls one numeric column out of the CSV for a user detection function.
fn read_column(raw: &[u8], name: &str) -> Result<Vec<f64>, CliError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(raw);
    let headers = reader
        .headers()
        .map_err(|e| CliError::Runtime(e.to_string()))?
        .clone();
    let idx = headers.iter().position(|h| h == name).ok_or_else(|| {
        CliError::Usage(format!(
            "--omega {name:?} is neither \"estimated\", a builtin detection function \
             nor a column of the input file"
        ))
    })?;
    let mut values = Vec::new();
    for (row_no, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Runtime(e.to_string()))?;
        let raw_field = record.get(idx).unwrap_or("");
        let v: f64 = raw_field.trim().parse().map_err(|_| {
            CliError::Runtime(format!(
                "cannot parse {raw_field:?} in column {name:?}, row {} as a real number",
                row_no + 1
            ))
        })?;
        values.push(v);
    }
    Ok(values)
}

const BUILTIN_OMEGAS: [&str; 3] = ["omega1_ex2", "omega2_ex2", "remark1"];

fn cmd_test(args: TestArgs) -> Result<(), CliError> {
    if !(0.0 < args.alpha && args.alpha < 1.0) {
        return Err(CliError::Usage(format!("--alpha must be in (0, 1), got {}", args.alpha)));
    }
    if !(0.0 < args.gamma && args.gamma <= 1.0) {
        return Err(CliError::Usage(format!("--gamma must be in (0, 1], got {}", args.gamma)));
    }

    let raw = read_input(&args.input)?;
    let schema = CsvSchema {
        covariates: args.x.clone(),
        response: args.y.clone(),
        indicator: args.delta.clone(),
    };
    let dataset = data::ingest_csv(raw.as_slice(), &schema)?;

    let mut smoother = SmootherConfig::new(args.degree);
    smoother.holder_gamma = args.gamma;
    smoother.bandwidth = match (&args.bandwidth, &args.cv_grid) {
        (Some(spec), None) if spec == "cv" => BandwidthRule::default(),
        (Some(spec), None) => {
            let c: f64 = spec.parse().map_err(|_| {
                CliError::Usage(format!("--bandwidth must be \"cv\" or a number, got {spec:?}"))
            })?;
            if !(c > 0.0) {
                return Err(CliError::Usage(format!("--bandwidth constant must be > 0, got {c}")));
            }
            BandwidthRule::Fixed(c)
        }
        (None, Some(grid)) => {
            if grid.is_empty() || grid.iter().any(|&c| !(c > 0.0)) {
                return Err(CliError::Usage(
                    "--cv-grid needs a nonempty list of positive constants".into(),
                ));
            }
            BandwidthRule::Cv(grid.clone())
        }
        (None, None) => BandwidthRule::default(),
        (Some(_), Some(_)) => unreachable!("clap rejects the combination"),
    };
    if args.kernel != "auto" {
        let spec = KernelSpec::parse(&args.kernel)
            .map_err(|e| CliError::Usage(format!("--kernel: {e}")))?;
        smoother = smoother.with_kernel(spec);
    }

    let detection = if args.omega == "estimated" {
        DetectionFunction::EstimatedScale
    } else if BUILTIN_OMEGAS.contains(&args.omega.as_str()) {
        DetectionFunction::Builtin(args.omega.clone())
    } else {
        DetectionFunction::User(read_column(&raw, &args.omega)?)
    };

    let mut cfg = TestConfig::new(smoother, detection);
    cfg.alpha = args.alpha;
    cfg.quantile_source = match args.bootstrap {
        Some(b) => {
            let mut boot = BootstrapConfig::new(b, args.seed);
            boot.smoothing = if args.smoothing == "auto" {
                Smoothing::Auto
            } else {
                let v: f64 = args.smoothing.parse().map_err(|_| {
                    CliError::Usage(format!(
                        "--smoothing must be \"auto\" or a number, got {:?}",
                        args.smoothing
                    ))
                })?;
                if !(v > 0.0) {
                    return Err(CliError::Usage(format!(
                        "--smoothing value must be > 0, got {v}"
                    )));
                }
                Smoothing::Value(v)
            };
            QuantileSource::Bootstrap(boot)
        }
        None => match args.critical.as_str() {
            "published" => QuantileSource::FixedCritical(published_critical_value(args.alpha)?),
            "exact" => QuantileSource::Asymptotic,
            other => {
                let b: f64 = other.parse().map_err(|_| {
                    CliError::Usage(format!(
                        "--critical must be \"published\", \"exact\" or a number, got {other:?}"
                    ))
                })?;
                if !(b > 0.0) {
                    return Err(CliError::Usage(format!("--critical value must be > 0, got {b}")));
                }
                QuantileSource::FixedCritical(b)
            }
        },
    };

    let outcome = empirical::run_test(&dataset, &cfg)?;

    if let Some(path) = &args.dump_residuals {
        dump_residuals(path, &args.x, &dataset, &cfg)?;
    }

    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    serde_json::to_writer(&mut out, &outcome)?;
    writeln!(out)?;

    let verdict = if outcome.reject {
        "reject constant error scale"
    } else {
        "no evidence against constant error scale"
    };
    eprintln!(
        "T = {:.4}, critical value = {:.4} ({}), p = {:.4}, n used = {}: {verdict}",
        outcome.statistic,
        outcome.critical_value,
        outcome.diagnostics.quantile_source,
        outcome.p_value,
        outcome.n_used,
    );
    Ok(())
}

fn dump_residuals(
    path: &std::path::Path,
    x_names: &[String],
    dataset: &Dataset,
    cfg: &TestConfig,
) -> Result<(), CliError> {
    let detail = empirical::fit_detail(dataset, cfg)?;
    let file = std::fs::File::create(path)
        .map_err(|e| CliError::Runtime(format!("cannot create {path:?}: {e}")))?;
    let mut w = csv::Writer::from_writer(file);
    let mut header: Vec<String> = x_names.to_vec();
    header.extend(["y", "fitted", "residual", "weight"].map(String::from));
    w.write_record(&header).map_err(|e| CliError::Runtime(e.to_string()))?;
    for j in 0..detail.y.len() {
        let mut rec: Vec<String> = detail.x[j].iter().map(|v| format!("{v}")).collect();
        rec.push(format!("{}", detail.y[j]));
        rec.push(format!("{}", detail.fitted[j]));
        rec.push(format!("{}", detail.residuals[j]));
        rec.push(format!("{}", detail.weights[j]));
        w.write_record(&rec).map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct TablesOut<'a> {
    schema_version: u32,
    tables: &'a [simulate::TableReport],
}

#[derive(Serialize)]
struct ScenarioOut<'a> {
    schema_version: u32,
    scenario: &'a ScenarioSpec,
    report: &'a simulate::RejectionReport,
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    match &args.table {
        Some(tables) => simulate_tables(&args, tables.clone()),
        None => simulate_scenario(&args),
    }
}

fn simulate_tables(args: &SimulateArgs, tables: Vec<u8>) -> Result<(), CliError> {
    if tables.is_empty() {
        return Err(CliError::Usage("--table needs at least one table number".into()));
    }
    let opts = TableOptions {
        runs: args.runs,
        seed: args.seed,
        fast_cv: args.fast,
        include_bootstrap: args.bootstrap.is_some(),
        bootstrap_replications: args.bootstrap.unwrap_or(500),
    };
    let start = std::time::Instant::now();
    let reports = simulate::reproduce_tables(&tables, &opts)?;

    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match args.format {
        Format::Json => {
            serde_json::to_writer(&mut out, &TablesOut { schema_version: 1, tables: &reports })?;
            writeln!(out)?;
        }
        Format::Tsv => {
            writeln!(out, "table\tscale\tn\tquantile\tpublished\tours\tstd_error\ttolerance\twithin")?;
            for report in &reports {
                for cell in &report.cells {
                    writeln!(
                        out,
                        "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                        report.table,
                        cell.scale,
                        cell.n,
                        cell.quantile,
                        cell.published,
                        cell.ours,
                        cell.std_error,
                        cell.tolerance,
                        cell.within,
                    )?;
                }
            }
        }
    }
    for report in &reports {
        let within = report.cells.iter().filter(|c| c.within).count();
        eprintln!(
            "table {}: {within}/{} cells within tolerance ({} runs, seed {})",
            report.table,
            report.cells.len(),
            report.runs,
            report.seed,
        );
    }
    eprintln!("total time {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}

fn simulate_scenario(args: &SimulateArgs) -> Result<(), CliError> {
    let example = args.example.ok_or_else(|| {
        CliError::Usage("simulate needs either --table or --example with --n".into())
    })?;
    let n = args
        .n
        .ok_or_else(|| CliError::Usage("scenario mode needs --n".into()))?;
    let example = match example {
        ExampleArg::Ex1 => ExampleId::Ex1,
        ExampleArg::Ex2 => ExampleId::Ex2,
        ExampleArg::Remark1 => ExampleId::Remark1,
    };
    let detection = match args.detection {
        DetectionArg::Estimated => DetectionId::Estimated,
        DetectionArg::Omega1Ex2 => DetectionId::Omega1Ex2,
        DetectionArg::Omega2Ex2 => DetectionId::Omega2Ex2,
        DetectionArg::Remark1 => DetectionId::Remark1Omega,
    };
    let mut spec = ScenarioSpec::new(example, args.scale, detection, n, args.runs);
    spec.missing = args.missing;
    spec.seed = args.seed;
    spec.alpha = args.alpha;
    spec.fast_cv = args.fast;
    spec.quantile = match args.quantile {
        QuantileArg::Published => QuantilePolicy::PublishedAsymptotic,
        QuantileArg::Exact => QuantilePolicy::Asymptotic,
        QuantileArg::Bootstrap => QuantilePolicy::Bootstrap {
            replications: args.bootstrap.unwrap_or(500),
        },
    };

    let report = simulate::monte_carlo(&spec)?;

    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match args.format {
        Format::Json => {
            serde_json::to_writer(
                &mut out,
                &ScenarioOut { schema_version: 1, scenario: &spec, report: &report },
            )?;
            writeln!(out)?;
        }
        Format::Tsv => {
            writeln!(out, "rejection_rate\tstd_error\tmean_statistic\truns")?;
            writeln!(
                out,
                "{}\t{}\t{}\t{}",
                report.rejection_rate, report.std_error, report.mean_statistic, report.runs
            )?;
        }
    }
    eprintln!(
        "rejection rate {:.4} (se {:.4}) over {} runs, mean T = {:.4}, {:.1}s",
        report.rejection_rate,
        report.std_error,
        report.runs,
        report.mean_statistic,
        report.runtime_secs,
    );
    Ok(())
}

#[derive(Serialize)]
struct QuantileOut {
    schema_version: u32,
    alpha: f64,
    critical_value: f64,
    source: &'static str,
}

fn cmd_quantile(args: QuantileArgs) -> Result<(), CliError> {
    if !(0.0 < args.alpha && args.alpha < 1.0) {
        return Err(CliError::Usage(format!("--alpha must be in (0, 1), got {}", args.alpha)));
    }
    let (value, source) = if args.exact {
        (nulldist::quantile_sup_bridge(args.alpha, SeriesPolicy::default())?, "exact")
    } else {
        (published_critical_value(args.alpha)?, "published")
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    if args.json {
        serde_json::to_writer(
            &mut out,
            &QuantileOut { schema_version: 1, alpha: args.alpha, critical_value: value, source },
        )?;
        writeln!(out)?;
    } else {
        writeln!(out, "{value:.4}")?;
    }
    eprintln!("b_alpha at alpha = {} ({source}): {value:.4}", args.alpha);
    Ok(())
}
