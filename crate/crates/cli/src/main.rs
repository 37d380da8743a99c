use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tsbpca_core::eval::{self, SyntheticSpec};
use tsbpca_core::oracle::{oracle_basis, reconstruction_error, subspace_distance};
use tsbpca_core::{compress, io, CounterMode, Dataset, Error, Pooling, Result, RunConfig};

const EXIT_INPUT: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;
const EXIT_FAIL: u8 = 3;

/// Streaming temporal batch PCA for multivariate time series.
#[derive(Debug, Parser)]
#[command(name = "tsbpca", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compress a dataset along the variable axis and write Y plus a JSON sidecar.
    Compress(CompressArgs),
    /// Compare the streaming basis with batch PCA on the same data.
    Validate(ValidateArgs),
    /// Run compress over a grid of (T, K) and write one CSV row per cell.
    Sweep(SweepArgs),
    /// Time compress at several sequence lengths and write the medians.
    Bench(BenchArgs),
    /// Write a synthetic labelled dataset in long-form CSV.
    Generate(GenerateArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Ts,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PoolingArg {
    None,
    Mean,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CounterArg {
    Global,
    PerBatch,
}

/// Inner-loop knobs shared by every subcommand that runs compress.
#[derive(Debug, Args)]
struct Tuning {
    /// Convergence tolerance on the projector distance between sweeps.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Cap on inner power-iteration sweeps per time point.
    #[arg(long = "max-iters", default_value_t = 100)]
    max_iters: usize,
    /// Seed for the initial basis and for any generated data.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Weight counter: global over the sequence, or restarted each batch.
    #[arg(long, value_enum, default_value_t = CounterArg::Global)]
    counter: CounterArg,
}

/// Where the input comes from: a file, or a named synthetic preset.
#[derive(Debug, Args)]
struct Source {
    /// Input file (long-form CSV or UEA .ts).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Input format; inferred from the file extension when omitted.
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Synthetic preset used when no --input is given.
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Debug, Args)]
struct CompressArgs {
    /// Input file (long-form CSV or UEA .ts).
    #[arg(long)]
    input: PathBuf,
    /// Input format; inferred from the file extension when omitted.
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Time points per batch (T).
    #[arg(short = 'T', long = "time-batch")]
    time_batch: usize,
    /// Number of principal components kept (K).
    #[arg(short = 'K', long)]
    components: usize,
    #[command(flatten)]
    tuning: Tuning,
    /// Emit every time step, or one mean row per batch.
    #[arg(long, value_enum, default_value_t = PoolingArg::None)]
    pooling: PoolingArg,
    /// Output CSV; the sidecar goes next to it as <name>.meta.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[command(flatten)]
    source: Source,
    /// Time points per batch (T).
    #[arg(short = 'T', long = "time-batch", default_value_t = 10)]
    time_batch: usize,
    /// Number of principal components kept (K).
    #[arg(short = 'K', long, default_value_t = 2)]
    components: usize,
    #[command(flatten)]
    tuning: Tuning,
    /// Largest subspace distance that still counts as PASS.
    #[arg(long = "max-distance", default_value_t = 0.15)]
    max_distance: f64,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    source: Source,
    /// Comma-separated time batch sizes.
    #[arg(long = "t", value_delimiter = ',', default_value = "2,5,10")]
    t_values: Vec<usize>,
    /// Comma-separated component counts.
    #[arg(long = "k", value_delimiter = ',', default_value = "1,2")]
    k_values: Vec<usize>,
    #[command(flatten)]
    tuning: Tuning,
    /// Cells evaluated in parallel.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Output CSV, one row per cell.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Comma-separated sequence lengths.
    #[arg(long = "n", value_delimiter = ',', default_value = "250,500,1000")]
    lengths: Vec<usize>,
    /// Instances per dataset (B).
    #[arg(long, default_value_t = 64)]
    instances: usize,
    /// Variables per time point (d); spectrum 5, 3, 1, 0.5, 0.2, 0.1, then halving.
    #[arg(long, default_value_t = 6)]
    vars: usize,
    /// Time points per batch (T).
    #[arg(short = 'T', long = "time-batch", default_value_t = 10)]
    time_batch: usize,
    /// Number of principal components kept (K).
    #[arg(short = 'K', long, default_value_t = 2)]
    components: usize,
    /// Timed runs per length (at least 3), interleaved across lengths.
    #[arg(long, default_value_t = 9)]
    repeats: usize,
    #[command(flatten)]
    tuning: Tuning,
    /// Output CSV, one row per length.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    /// Synthetic preset.
    #[arg(long, default_value = "stationary-2class")]
    preset: String,
    /// Seed for the rotation and the samples.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV.
    #[arg(long)]
    out: PathBuf,
}

/// A failure carrying the exit code it maps to.
enum Failure {
    Lib(Error),
    ValidationFailed,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_INPUT)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let outcome = match cli.command {
        Command::Compress(a) => cmd_compress(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Generate(a) => cmd_generate(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::ValidationFailed) => ExitCode::from(EXIT_FAIL),
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() {
                EXIT_NUMERICAL
            } else {
                EXIT_INPUT
            })
        }
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidConfig(msg.into())
}

fn check_tuning(t: &Tuning) -> Result<()> {
    if !(t.tol > 0.0 && t.tol.is_finite()) {
        return Err(invalid(format!(
            "--tol must be positive and finite, got {}",
            t.tol
        )));
    }
    if t.max_iters == 0 {
        return Err(invalid("--max-iters must be >= 1"));
    }
    Ok(())
}

fn check_positive(name: &str, values: &[usize]) -> Result<()> {
    if values.is_empty() {
        return Err(invalid(format!("{name} needs at least one value")));
    }
    if values.contains(&0) {
        return Err(invalid(format!("{name} values must be >= 1")));
    }
    Ok(())
}

fn run_config(time_batch: usize, components: usize, t: &Tuning) -> RunConfig {
    RunConfig::new(time_batch, components)
        .with_tol(t.tol)
        .with_max_inner_iters(t.max_iters)
        .with_seed(t.seed)
        .with_counter(match t.counter {
            CounterArg::Global => CounterMode::Global,
            CounterArg::PerBatch => CounterMode::PerBatch,
        })
}

fn resolve_format(path: &Path, format: Option<Format>) -> Result<Format> {
    if let Some(f) = format {
        return Ok(f);
    }
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("csv") => Ok(Format::Csv),
        Some("ts") => Ok(Format::Ts),
        _ => Err(invalid(format!(
            "cannot infer the format of {}; pass --format csv or --format ts",
            path.display()
        ))),
    }
}

fn load(path: &Path, format: Format) -> Result<Dataset> {
    match format {
        Format::Csv => io::read_csv(path),
        Format::Ts => io::read_ts(path),
    }
}

/// Checks the source flags without touching the filesystem and returns a
/// loader to call once every other flag has been checked.
fn plan_source(source: &Source, seed: u64) -> Result<Box<dyn FnOnce() -> Result<Dataset> + '_>> {
    match (&source.input, &source.preset) {
        (Some(_), Some(_)) => Err(invalid("pass either --input or --preset, not both")),
        (Some(path), None) => {
            let format = resolve_format(path, source.format)?;
            Ok(Box::new(move || load(path, format)))
        }
        (None, preset) => {
            if source.format.is_some() {
                return Err(invalid("--format only applies to --input"));
            }
            let spec = eval::preset(preset.as_deref().unwrap_or("stationary"), seed)?;
            Ok(Box::new(move || eval::generate(&spec, seed)))
        }
    }
}

fn cmd_compress(a: CompressArgs) -> Result<(), Failure> {
    check_tuning(&a.tuning)?;
    check_positive("-T/--time-batch", &[a.time_batch])?;
    check_positive("-K/--components", &[a.components])?;
    let format = resolve_format(&a.input, a.format)?;
    let config = run_config(a.time_batch, a.components, &a.tuning).with_pooling(match a.pooling {
        PoolingArg::None => Pooling::None,
        PoolingArg::Mean => Pooling::MeanOverBatch,
    });

    let ds = load(&a.input, format)?;
    let start = Instant::now();
    let rep = compress(&ds, &config)?;
    let elapsed = start.elapsed().as_secs_f64();
    io::write_compact(&rep, &a.out)?;
    println!(
        "X {}x{}x{} -> Y {}x{}x{}, {} batches, converged fraction {:.3}, wall time {:.3} s",
        ds.n_instances(),
        ds.n_times(),
        ds.n_vars(),
        rep.n_instances(),
        rep.n_times(),
        rep.n_components(),
        rep.reports.len(),
        rep.converged_fraction(),
        elapsed
    );
    Ok(())
}

fn cmd_validate(a: ValidateArgs) -> Result<(), Failure> {
    check_tuning(&a.tuning)?;
    check_positive("-T/--time-batch", &[a.time_batch])?;
    check_positive("-K/--components", &[a.components])?;
    if a.max_distance < 0.0 || a.max_distance.is_nan() {
        return Err(invalid("--max-distance must be >= 0").into());
    }
    let config = run_config(a.time_batch, a.components, &a.tuning);
    let ds = plan_source(&a.source, a.tuning.seed)?()?;

    let rep = compress(&ds, &config)?;
    let q_stream = rep.final_state.q();
    let q_oracle = oracle_basis(&ds, a.components)?;
    let distance = subspace_distance(q_stream.view(), q_oracle.view())?;
    let err_stream = reconstruction_error(&ds, q_stream.view())?;
    let err_oracle = reconstruction_error(&ds, q_oracle.view())?;
    println!("subspace distance      {}", io::format_f64(distance));
    println!("reconstruction streaming {}", io::format_f64(err_stream));
    println!("reconstruction oracle    {}", io::format_f64(err_oracle));
    if distance <= a.max_distance {
        println!("PASS (distance <= {})", a.max_distance);
        Ok(())
    } else {
        println!("FAIL (distance > {})", a.max_distance);
        Err(Failure::ValidationFailed)
    }
}

fn cmd_sweep(a: SweepArgs) -> Result<(), Failure> {
    check_tuning(&a.tuning)?;
    check_positive("--t", &a.t_values)?;
    check_positive("--k", &a.k_values)?;
    if a.jobs == 0 {
        return Err(invalid("--jobs must be >= 1").into());
    }
    let template = run_config(1, 1, &a.tuning);
    let source = Source {
        preset: a.source.preset.clone().or_else(|| {
            a.source
                .input
                .is_none()
                .then(|| "stationary-2class".to_string())
        }),
        ..a.source
    };
    let ds = plan_source(&source, a.tuning.seed)?()?;

    let result = eval::sweep(&ds, &a.t_values, &a.k_values, &template, a.jobs)?;
    io::write_atomic(&a.out, result.to_csv().as_bytes())?;
    let unstable = result.cells.iter().filter(|c| c.unstable).count();
    let failed = result.cells.iter().filter(|c| c.error.is_some()).count();
    println!(
        "{} cells written to {}, {} unstable, {} failed",
        result.cells.len(),
        a.out.display(),
        unstable,
        failed
    );
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> Result<(), Failure> {
    check_tuning(&a.tuning)?;
    check_positive("--n", &a.lengths)?;
    check_positive("--instances", &[a.instances])?;
    check_positive("--vars", &[a.vars])?;
    let config = run_config(a.time_batch, a.components, &a.tuning);
    let min_len = *a.lengths.iter().min().expect("checked non-empty");
    config.validate(a.vars, min_len)?;

    let head = [5.0, 3.0, 1.0, 0.5, 0.2, 0.1];
    let eigenvalues = (0..a.vars)
        .map(|i| {
            head.get(i)
                .copied()
                .unwrap_or(0.1 * 0.5f64.powi(i as i32 - 5))
        })
        .collect();
    let base = SyntheticSpec::stationary(a.instances, min_len, eigenvalues, a.tuning.seed);
    let rows = eval::bench_scaling(&base, &a.lengths, &config, a.repeats, a.tuning.seed)?;
    io::write_atomic(&a.out, eval::bench_to_csv(&rows).as_bytes())?;
    for (i, r) in rows.iter().enumerate() {
        let ratio = match i {
            0 => String::new(),
            _ => format!("  ratio {:.2}", r.median_s / rows[i - 1].median_s),
        };
        println!("N = {:>6}  median {:.4} s{}", r.length, r.median_s, ratio);
    }
    Ok(())
}

fn cmd_generate(a: GenerateArgs) -> Result<(), Failure> {
    let spec = eval::preset(&a.preset, a.seed)?;
    let ds = eval::generate(&spec, a.seed)?;
    io::write_csv(&ds, &a.out)?;
    println!(
        "{} instances x {} times x {} variables written to {}",
        ds.n_instances(),
        ds.n_times(),
        ds.n_vars(),
        a.out.display()
    );
    Ok(())
}
