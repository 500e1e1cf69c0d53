//! `isospec`: runs one experiment scenario and writes its report.

mod output;
mod plot;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use isospec::experiments::{run, ExperimentConfig, ExperimentReport, Scenario, Status};
use isospec::stats::{with_workers, workers_from_env};
use isospec::Error;

use plot::PlotKind;

#[derive(Parser, Debug)]
#[command(name = "isospec", version, about = "Isospectral random matrix experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Closed-form unitary and sphere moments against Monte Carlo.
    Oracles(RunArgs),
    /// Exchangeable-pair drift and conditional covariance.
    Stein(RunArgs),
    /// Gaussianity of scaled marginals tr(A B_i).
    Marginals(RunArgs),
    /// Gaussianity of scaled matrix entries.
    Entries(RunArgs),
    /// Spectra of principal truncations.
    Submatrix(RunArgs),
    /// Empirical measure and maximum of the diagonal.
    Schurhorn(RunArgs),
    /// Marginals of induced density matrices.
    Induced(RunArgs),
    /// Marginals of invariant ensembles with random eigenvalues.
    Invariant(RunArgs),
    /// Evaluates the bounds for the configured spectrum and frame.
    Bounds(RunArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// JSON config; missing keys take the scenario defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dotted-path override, e.g. `--set spectrum.kind=rank_one`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory.
    #[arg(long, default_value = "isospec-out")]
    out: PathBuf,
    /// Sets `rng.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Plot data to emit from the report's samples. Repeatable.
    #[arg(long, value_enum)]
    plot: Vec<PlotKind>,
}

impl Command {
    fn split(self) -> (Scenario, RunArgs) {
        match self {
            Command::Oracles(a) => (Scenario::Oracles, a),
            Command::Stein(a) => (Scenario::Stein, a),
            Command::Marginals(a) => (Scenario::Marginals, a),
            Command::Entries(a) => (Scenario::Entries, a),
            Command::Submatrix(a) => (Scenario::Submatrix, a),
            Command::Schurhorn(a) => (Scenario::SchurHorn, a),
            Command::Induced(a) => (Scenario::Induced, a),
            Command::Invariant(a) => (Scenario::Invariant, a),
            Command::Bounds(a) => (Scenario::Bounds, a),
        }
    }
}

enum Failure {
    Usage(String),
    Runtime(String),
}

fn load_config(scenario: Scenario, args: &RunArgs) -> Result<ExperimentConfig, Failure> {
    let text = match &args.config {
        Some(p) => fs::read_to_string(p).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", p.display())))?,
        None => "{}".to_string(),
    };
    let mut overrides = args.overrides.clone();
    if let Some(seed) = args.seed {
        overrides.push(format!("rng.seed={seed}"));
    }
    let cfg = ExperimentConfig::from_json_str(Some(scenario), &text, &overrides).map_err(|e| Failure::Usage(e.to_string()))?;
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(cfg)
}

fn write_outputs(out: &Path, report: &ExperimentReport, seconds: f64, workers: usize, plots: &[PlotKind]) -> Result<(), Failure> {
    let io = |e: std::io::Error| Failure::Runtime(format!("writing {}: {e}", out.display()));
    // Plot data is built first so a missing sample leaves no files behind.
    let mut plot_files = Vec::new();
    for &kind in plots {
        let body = plot::emit_plotdata(report, kind).map_err(|e| Failure::Runtime(e.to_string()))?;
        plot_files.push((format!("plot_{}.csv", kind.name()), body));
    }
    fs::create_dir_all(out).map_err(io)?;
    fs::write(out.join("report.json"), output::report_json(report)).map_err(io)?;
    fs::write(out.join("replicas.csv"), output::replicas_csv(report)).map_err(io)?;
    fs::write(out.join("timing.json"), output::timing_json(report, seconds, workers)).map_err(io)?;
    for (name, body) in plot_files {
        fs::write(out.join(name), body).map_err(io)?;
    }
    Ok(())
}

fn execute(scenario: Scenario, args: RunArgs) -> Result<Status, Failure> {
    let cfg = load_config(scenario, &args)?;
    let workers = workers_from_env();
    let start = Instant::now();
    let report = with_workers(workers, || run(&cfg)).map_err(|e| match e {
        Error::Config(_) => Failure::Usage(e.to_string()),
        _ => Failure::Runtime(e.to_string()),
    })?;
    let seconds = start.elapsed().as_secs_f64();
    write_outputs(&args.out, &report, seconds, workers, &args.plot)?;
    println!("{}", output::summary_line(&report));
    Ok(report.status)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (scenario, args) = cli.command.split();
    match execute(scenario, args) {
        Ok(Status::Fail) => ExitCode::from(1),
        Ok(_) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("isospec: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("isospec: {msg}");
            ExitCode::from(1)
        }
    }
}
