use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use rcmc::harness::{self, bench_csv, trajectory_csv, DEFAULT_T_MAX};
use rcmc::model::DEFAULT_BALANCE_TOLERANCE;
use rcmc::{
    generate, read_instance, write_native, GeneratorSpec, InputFormat, Method, Mode, PSource,
    RateConstantMatrix, Trajectory, DEFAULT_RELAX_EPS,
};

#[derive(Parser)]
#[command(name = "rcmc-cli", version, about = "Rate constant matrix contraction for first-order kinetics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded synthetic instance in the native format.
    Generate(GenerateArgs),
    /// Parse and validate an instance, then print a summary.
    Validate(InstanceArgs),
    /// Run Step 1 and Step 2 with one method.
    Simulate(SimulateArgs),
    /// Run several methods and report divergence from greedy.
    Compare(CompareArgs),
    /// Emit timing and counter rows over instances and t_max values.
    Bench(BenchArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 3.0)]
    degree: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// log10 lower bound of edge weights.
    #[arg(long, default_value_t = -3.0, allow_negative_numbers = true)]
    weight_lo: f64,
    #[arg(long, default_value_t = 3.0, allow_negative_numbers = true)]
    weight_hi: f64,
    /// log10 lower bound of stationary weights.
    #[arg(long, default_value_t = -1.0, allow_negative_numbers = true)]
    pi_lo: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pi_hi: f64,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Native,
    RawRates,
}

#[derive(Args)]
struct InstanceArgs {
    instance: PathBuf,
    #[arg(long, value_enum, default_value = "native")]
    input_format: FormatArg,
    /// Relative detailed-balance tolerance for raw-rate input.
    #[arg(long, default_value_t = DEFAULT_BALANCE_TOLERANCE)]
    balance_tol: f64,
}

impl InstanceArgs {
    fn load(&self) -> Result<RateConstantMatrix> {
        load(&self.instance, self.input_format, self.balance_tol)
    }
}

fn load(path: &Path, format: FormatArg, tol: f64) -> Result<RateConstantMatrix> {
    let format = match format {
        FormatArg::Native => InputFormat::Native,
        FormatArg::RawRates => InputFormat::RawRates,
    };
    read_instance(path, format, tol).with_context(|| format!("reading {}", path.display()))
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Full,
    Last,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum OutFormat {
    Csv,
    Json,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    input: InstanceArgs,
    #[arg(long, default_value_t = DEFAULT_T_MAX)]
    t_max: f64,
    #[arg(long, default_value = "greedy")]
    method: String,
    #[arg(long, value_enum, default_value = "full")]
    mode: ModeArg,
    #[arg(long, default_value_t = DEFAULT_RELAX_EPS)]
    eps_relax: f64,
    /// uniform, point:IDX (1-based) or file:PATH.
    #[arg(long, default_value = "point:1")]
    p: String,
    /// Trajectory CSV, or the combined JSON document with --format json; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: OutFormat,
    /// Where to write the run report JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    input: InstanceArgs,
    #[arg(long, default_value_t = DEFAULT_T_MAX)]
    t_max: f64,
    /// Comma-separated method names.
    #[arg(long, value_delimiter = ',', default_value = "greedy,fast,lazyfast,stable,relaxed")]
    methods: Vec<String>,
    #[arg(long, default_value_t = DEFAULT_RELAX_EPS)]
    eps_relax: f64,
    /// Include the full 1-based pivot lists.
    #[arg(long)]
    pivots: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: OutFormat,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(required = true)]
    instances: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "native")]
    input_format: FormatArg,
    #[arg(long, default_value_t = DEFAULT_BALANCE_TOLERANCE)]
    balance_tol: f64,
    /// Comma-separated t_max grid in seconds.
    #[arg(long, value_delimiter = ',', default_value = "86400")]
    t_max: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "greedy,fast,lazyfast,stable,relaxed")]
    methods: Vec<String>,
    #[arg(long, default_value_t = DEFAULT_RELAX_EPS)]
    eps_relax: f64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: OutFormat,
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn methods(names: &[String], eps: f64) -> Result<Vec<Method>> {
    Ok(names
        .iter()
        .map(|m| Method::parse(m.trim(), eps))
        .collect::<rcmc::Result<Vec<_>>>()?)
}

fn trajectory_json(traj: &Trajectory) -> serde_json::Value {
    traj.entries
        .iter()
        .map(|e| json!({"j": e.j, "t_seconds": e.t, "q": e.q.values()}))
        .collect()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => {
            let spec = GeneratorSpec::new(a.n, a.seed)
                .with_degree(a.degree)
                .with_weight_range(a.weight_lo, a.weight_hi)
                .with_pi_range(a.pi_lo, a.pi_hi);
            let k = generate(&spec)?;
            emit(a.out.as_deref(), &write_native(&k, &spec.header()))
        }
        Command::Validate(a) => {
            let k = a.load()?;
            let lap = k.laplacian();
            println!(
                "ok n={} edges={} components={} dynamic_range={:e}",
                k.n(),
                lap.nnz_offdiag() / 2,
                lap.components().len(),
                k.dynamic_range()
            );
            Ok(())
        }
        Command::Simulate(a) => {
            let k = a.input.load()?;
            let method = Method::parse(&a.method, a.eps_relax)?;
            let p = a.p.parse::<PSource>()?.load(k.n())?;
            let mode = match a.mode {
                ModeArg::Full => Mode::Full,
                ModeArg::Last => Mode::Last,
            };
            let sim = harness::simulate(&k, &p, a.t_max, method, mode)?;
            let report = serde_json::to_value(&sim.report)?;
            if let Some(path) = &a.report {
                emit(Some(path), &format!("{:#}\n", report))?;
            }
            let text = match a.format {
                OutFormat::Csv => trajectory_csv(&sim.trajectory, k.n()),
                OutFormat::Json => format!(
                    "{:#}\n",
                    json!({"report": report, "trajectory": trajectory_json(&sim.trajectory)})
                ),
            };
            emit(a.out.as_deref(), &text)
        }
        Command::Compare(a) => {
            let k = a.input.load()?;
            let methods = methods(&a.methods, a.eps_relax)?;
            let started = Instant::now();
            let reports = harness::compare(&k, a.t_max, &methods, a.pivots)?;
            let text = match a.format {
                OutFormat::Json => format!(
                    "{:#}\n",
                    json!({"version": harness::REPORT_VERSION, "reference": "greedy", "runs": reports,
                           "total_seconds": started.elapsed().as_secs_f64()})
                ),
                OutFormat::Csv => {
                    let mut s = String::from("method,k,divergence_index,t_step1,pivots_digest\n");
                    for r in &reports {
                        s.push_str(&format!(
                            "{},{},{},{:.6e},{}\n",
                            r.method,
                            r.k,
                            r.divergence_index.map(|d| d.to_string()).unwrap_or_default(),
                            r.t_step1_seconds,
                            r.pivots_digest
                        ));
                    }
                    s
                }
            };
            emit(a.out.as_deref(), &text)
        }
        Command::Bench(a) => {
            let methods = methods(&a.methods, a.eps_relax)?;
            let mut rows = Vec::new();
            for path in &a.instances {
                let k = load(path, a.input_format, a.balance_tol)?;
                rows.extend(harness::bench(&k, &a.t_max, &methods)?);
            }
            let text = match a.format {
                OutFormat::Csv => bench_csv(&rows),
                OutFormat::Json => format!("{:#}\n", serde_json::to_value(&rows)?),
            };
            emit(a.out.as_deref(), &text)
        }
    }
}

fn main() {
    if let Err(err) = run(Cli::parse()) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}
