//! `ragg`: generate sample sets, attack them, aggregate them and run the
//! experiment harness from the command line.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 I/O or file format
//! error, 3 numerical failure. Power iteration that hits its iteration cap is
//! reported on stderr and does not change the exit code.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use ragg_core::aggregators::{corrupted_count, meta_aggregate, Aggregator, Subroutine, ThresholdConfig, DEFAULT_K};
use ragg_core::attacks::{
    dnc_binary_attack, hidra_corrupt_chunked, sign_flip_baseline, AttackConfig, IndexSelection,
};
use ragg_core::datagen::{gaussian_samples, VarianceProfile};
use ragg_core::format::{read_matrix, write_matrix, ResultTable};
use ragg_core::harness::{bias_sweep, dnc_beta_sweep, train_sim, ExperimentKind, ExperimentSpec};
use ragg_core::reduction::{
    angle_degrees, construct_ec, projection_margin, reduce_max_variance, verify_max_variance_alignment,
};
use ragg_core::{Error, SampleSet};

#[derive(Debug, Parser)]
#[command(name = "ragg", version, about = "Robust mean aggregation and attacks on it")]
struct Cli {
    /// Worker threads for parallel sections; results do not depend on this value.
    #[arg(long, global = true, env = "RAGG_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a Gaussian sample set as a matrix file.
    Gen(GenArgs),
    /// Aggregate the rows of a matrix file.
    Aggregate(AggregateArgs),
    /// Corrupt a benign matrix file.
    Attack(AttackArgs),
    /// Bias-versus-dimension sweep from a spec file.
    Sweep(SpecArgs),
    /// DnC attack-strength sweep from a spec file.
    Dnc(SpecArgs),
    /// Build a planted instance, run the reduction and report the angles.
    Reduction(ReductionArgs),
    /// Federated logistic regression under attack from a spec file.
    Trainsim(SpecArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ProfileArg {
    Spherical,
    Logspaced,
}

#[derive(Debug, Args)]
struct GenArgs {
    /// Number of samples.
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Dimension.
    #[arg(long, default_value_t = 1000)]
    d: usize,
    /// Variance profile.
    #[arg(long, value_enum, default_value = "logspaced")]
    profile: ProfileArg,
    /// Standard deviation of the spherical profile.
    #[arg(long, default_value_t = 1e-3)]
    sigma: f64,
    /// Smallest standard deviation of the log-spaced profile.
    #[arg(long, default_value_t = 1e-4)]
    sigma_min: f64,
    /// Largest standard deviation of the log-spaced profile.
    #[arg(long, default_value_t = 1e-5f64.sqrt())]
    sigma_max: f64,
    /// Repeat the profile with this period instead of spanning all axes.
    #[arg(long)]
    tile: Option<usize>,
    /// Value of every coordinate of the population mean.
    #[arg(long, default_value_t = 1e-3, allow_negative_numbers = true)]
    mean: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output matrix file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ThresholdArgs {
    /// Assumed bound on the benign per-chunk spectral norm.
    #[arg(long, default_value_t = 1e-5)]
    sigma_max_sq: f64,
    /// Threshold multiplier; the threshold is k times sigma-max-sq.
    #[arg(long, default_value_t = DEFAULT_K)]
    k: f64,
}

#[derive(Debug, Args)]
struct AggregateArgs {
    /// Input matrix file.
    #[arg(long)]
    input: PathBuf,
    /// Aggregator: mean, median, trimmed, krum, filtering, noregret or dnc.
    #[arg(long, default_value = "filtering", value_parser = parse_aggregator)]
    alg: Aggregator,
    /// Corrupted fraction.
    #[arg(long, default_value_t = 0.2)]
    eps: f64,
    #[command(flatten)]
    threshold: ThresholdArgs,
    /// Chunk width for the spectral aggregators.
    #[arg(long, default_value_t = 1000)]
    chunk_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output matrix file holding the aggregate as a single row.
    #[arg(long)]
    out: PathBuf,
    /// JSON-lines diagnostics file; stdout when absent.
    #[arg(long)]
    diagnostics: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AttackArg {
    Hidra,
    Signflip,
    Dnc,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SelectionArg {
    First,
    Random,
}

#[derive(Debug, Args)]
struct AttackArgs {
    /// Benign input matrix file.
    #[arg(long)]
    input: PathBuf,
    /// Attack to apply.
    #[arg(long, value_enum, default_value = "hidra")]
    attack: AttackArg,
    /// Corrupted fraction.
    #[arg(long, default_value_t = 0.2)]
    eps: f64,
    #[command(flatten)]
    threshold: ThresholdArgs,
    /// Chunk width the defender uses.
    #[arg(long, default_value_t = 1000)]
    chunk_size: usize,
    /// Detection slack for the threshold-hiding attack.
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
    /// Which samples are corrupted.
    #[arg(long, value_enum, default_value = "first")]
    selection: SelectionArg,
    /// Sign-flip scale.
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    /// DnC attack strength.
    #[arg(long, default_value_t = 10.0)]
    beta: f64,
    /// DnC ratio between the two binary directions.
    #[arg(long, default_value_t = 0.02)]
    c: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output matrix file.
    #[arg(long)]
    out: PathBuf,
    /// JSON report file; stdout when absent.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SpecArgs {
    /// Experiment spec file of `key = value` lines.
    #[arg(long)]
    spec: PathBuf,
    /// Output CSV file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReductionArgs {
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 200)]
    d: usize,
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    /// Threshold scale for the FILTERING aggregate used by the reduction.
    #[arg(long, default_value_t = 1.0)]
    sigma_max_sq: f64,
    /// Largest accepted angle in degrees.
    #[arg(long, default_value_t = 8.0)]
    max_angle: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_aggregator(s: &str) -> Result<Aggregator, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// A failure with its exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidInput(_) => 1,
            Error::Io(_) | Error::Format(_) | Error::Csv(_) | Error::DimensionMismatch { .. } => 2,
            Error::Numerical(_) | Error::NonConvergence { .. } => 3,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure { code: 2, message: e.to_string() }
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure { code: 2, message: e.to_string() }
    }
}

type CliResult = Result<(), Failure>;

fn open_output(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(io::BufWriter::new(fs::File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn write_table(table: &ResultTable, path: Option<&Path>) -> CliResult {
    let mut out = open_output(path)?;
    table.write_to(&mut out)?;
    out.flush()?;
    Ok(())
}

fn read_spec(path: &Path, kind: ExperimentKind) -> Result<ExperimentSpec, Failure> {
    let text = fs::read_to_string(path)?;
    let spec = ExperimentSpec::parse(&text)?;
    if spec.kind != kind {
        return Err(Failure {
            code: 1,
            message: format!("spec file is for `{}`, not `{}`", spec.kind.name(), kind.name()),
        });
    }
    Ok(spec)
}

fn threshold(args: &ThresholdArgs) -> Result<ThresholdConfig, Failure> {
    Ok(ThresholdConfig::new(args.sigma_max_sq, args.k)?)
}

fn run_gen(args: &GenArgs) -> CliResult {
    let profile = match args.profile {
        ProfileArg::Spherical => VarianceProfile::Spherical(args.sigma),
        ProfileArg::Logspaced => VarianceProfile::LogSpaced { min: args.sigma_min, max: args.sigma_max },
    };
    let stds = match args.tile {
        Some(period) => profile.tiled(args.d, period)?,
        None => profile.stds(args.d)?,
    };
    let x = gaussian_samples(args.n, &VarianceProfile::Explicit(stds), &vec![args.mean; args.d], args.seed)?;
    write_matrix(&args.out, &x)?;
    Ok(())
}

#[derive(Serialize)]
struct ChunkDiagnostic<'a> {
    aggregator: &'a str,
    chunk: usize,
    start: usize,
    end: usize,
    seed: u64,
    iterations: usize,
    final_spectral_norm: f64,
    xi: f64,
    converged: bool,
    degenerate: bool,
    eigen_warning: bool,
}

#[derive(Serialize)]
struct PlainDiagnostic<'a> {
    aggregator: &'a str,
    n: usize,
    d: usize,
}

fn run_aggregate(args: &AggregateArgs) -> CliResult {
    let y = read_matrix(&args.input)?;
    let cfg = threshold(&args.threshold)?;
    let report = args.alg.run(&y, args.eps, &cfg, args.chunk_size, args.seed)?;
    write_matrix(&args.out, &SampleSet::new(1, report.mean.len(), report.mean)?)?;

    let mut out = open_output(args.diagnostics.as_deref())?;
    let name = args.alg.name();
    if report.chunks.is_empty() {
        serde_json::to_writer(&mut out, &PlainDiagnostic { aggregator: name, n: y.n(), d: y.d() })?;
        writeln!(out)?;
    }
    for chunk in &report.chunks {
        let o = &chunk.outcome;
        if o.eigen_warning {
            eprintln!("warning: power iteration hit its iteration cap in chunk {}", chunk.index);
        }
        if !o.converged {
            eprintln!(
                "warning: chunk {} stopped with spectral norm {:e} above the threshold {:e}",
                chunk.index,
                o.final_spectral_norm,
                cfg.xi()
            );
        }
        let record = ChunkDiagnostic {
            aggregator: name,
            chunk: chunk.index,
            start: chunk.start,
            end: chunk.end,
            seed: chunk.seed,
            iterations: o.iterations,
            final_spectral_norm: o.final_spectral_norm,
            xi: cfg.xi(),
            converged: o.converged,
            degenerate: o.degenerate,
            eigen_warning: o.eigen_warning,
        };
        serde_json::to_writer(&mut out, &record)?;
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

fn run_attack(args: &AttackArgs) -> CliResult {
    let x = read_matrix(&args.input)?;
    let (y, report) = match args.attack {
        AttackArg::Hidra => {
            let cfg = threshold(&args.threshold)?;
            let mut attack = AttackConfig::new(args.eps, cfg.xi());
            attack.delta = args.delta;
            attack.selection = match args.selection {
                SelectionArg::First => IndexSelection::First,
                SelectionArg::Random => IndexSelection::Random,
            };
            let (y, report) = hidra_corrupt_chunked(&x, args.chunk_size, &attack, None, args.seed)?;
            (y, serde_json::to_value(report)?)
        }
        AttackArg::Signflip => {
            let y = sign_flip_baseline(&x, args.eps, args.scale)?;
            let k = corrupted_count(x.n(), args.eps);
            (y, serde_json::json!({ "corrupted_indices": (0..k).collect::<Vec<_>>(), "scale": args.scale }))
        }
        AttackArg::Dnc => {
            let (y, report) = dnc_binary_attack(&x, args.eps, args.beta, args.c, args.seed)?;
            (y, serde_json::to_value(report)?)
        }
    };
    write_matrix(&args.out, &y)?;
    let mut out = open_output(args.report.as_deref())?;
    serde_json::to_writer(&mut out, &report)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn run_sweep(args: &SpecArgs) -> CliResult {
    let spec = read_spec(&args.spec, ExperimentKind::Sweep)?;
    let output = bias_sweep(&spec)?;
    for row in &output.rows {
        eprintln!(
            "d={} bias={:.6e} (std {:.3e}) theory={:.6e} failures={}",
            row.d, row.empirical_bias_mean, row.empirical_bias_std, row.theoretical_bias, row.failures
        );
    }
    for trial in output.trials.iter().filter(|t| t.error.is_some()) {
        eprintln!("warning: d={} trial {} failed: {}", trial.d, trial.trial, trial.error.as_deref().unwrap_or(""));
    }
    write_table(&output.table()?, args.out.as_deref())
}

fn run_dnc(args: &SpecArgs) -> CliResult {
    let spec = read_spec(&args.spec, ExperimentKind::Dnc)?;
    let records = dnc_beta_sweep(&spec)?;
    write_table(&ragg_core::harness::DncSweepRecord::table(&records)?, args.out.as_deref())
}

fn run_trainsim(args: &SpecArgs) -> CliResult {
    let spec = read_spec(&args.spec, ExperimentKind::TrainSim)?;
    let result = train_sim(&spec)?;
    if result.diverged {
        eprintln!("warning: model diverged after {} rounds", result.accuracy.len());
    }
    eprintln!("final accuracy {:.4}", result.final_accuracy);
    write_table(&result.table()?, args.out.as_deref())
}

#[derive(Serialize)]
struct ReductionReport {
    n: usize,
    d: usize,
    eps: f64,
    seed: u64,
    reduction_angle_degrees: f64,
    principal_angle_degrees: f64,
    planted_recovered: bool,
    projection_margin: f64,
    fallback: bool,
    passes: bool,
}

fn run_reduction(args: &ReductionArgs) -> CliResult {
    let ec = construct_ec(args.n, args.d, args.eps, args.seed)?;
    let cfg = ThresholdConfig::with_default_k(args.sigma_max_sq)?;
    let outcome = reduce_max_variance(&ec.y, args.eps, |y| {
        Ok(meta_aggregate(y, args.eps, &cfg, Subroutine::Filtering, args.seed)?.mean)
    })?;
    let planted = ec.planted_difference();
    let alignment = verify_max_variance_alignment(&ec, 1e-6, args.seed)?;
    let mut candidates = outcome.candidates.clone();
    candidates.sort_unstable();
    let reduction_angle = angle_degrees(&outcome.direction, &alignment.top_direction);
    let report = ReductionReport {
        n: args.n,
        d: args.d,
        eps: args.eps,
        seed: args.seed,
        reduction_angle_degrees: reduction_angle,
        principal_angle_degrees: angle_degrees(&alignment.top_direction, &planted),
        planted_recovered: candidates == ec.corrupted_indices,
        projection_margin: projection_margin(&ec, &outcome),
        fallback: outcome.fallback,
        passes: reduction_angle <= args.max_angle,
    };
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, &report)?;
    writeln!(out)?;
    Ok(())
}

fn configure_threads(threads: Option<usize>) -> CliResult {
    if let Some(n) = threads {
        if n == 0 {
            return Err(Failure { code: 1, message: "--threads must be at least 1".into() });
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure { code: 1, message: e.to_string() })?;
    }
    Ok(())
}

fn dispatch(cli: Cli) -> CliResult {
    configure_threads(cli.threads)?;
    match &cli.command {
        Command::Gen(a) => run_gen(a),
        Command::Aggregate(a) => run_aggregate(a),
        Command::Attack(a) => run_attack(a),
        Command::Sweep(a) => run_sweep(a),
        Command::Dnc(a) => run_dnc(a),
        Command::Reduction(a) => run_reduction(a),
        Command::Trainsim(a) => run_trainsim(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
