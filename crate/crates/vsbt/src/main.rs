use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use vsbt::cli::{
    cmd_experiment1, cmd_experiment2, cmd_fit, cmd_generate, cmd_report, CliError, ConfigFile,
    ExitKind, FitFlags, GenerateKind, SineSettings,
};

/// Time-series segmentation with variable-splitting binary trees.
#[derive(Parser)]
#[command(name = "vsbt", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic series CSV.
    Generate(GenerateArgs),
    /// Fit the model to a series CSV and write a results JSON.
    Fit(FitArgs),
    /// Emit CSV and SVG report artifacts from a results JSON.
    Report(ReportArgs),
    /// Run the variable-vs-fixed splitting comparison end to end.
    Experiment1(ExperimentArgs),
    /// Run the change-uncertainty experiment on noisy sine data.
    Experiment2(Experiment2Args),
}

#[derive(Args)]
struct GenerateArgs {
    /// Three-segment piecewise AR(1) benchmark series (75 points).
    #[arg(long, conflicts_with = "sine")]
    experiment1: bool,
    /// Noisy sine wave.
    #[arg(long)]
    sine: bool,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 2.0)]
    amplitude: f64,
    #[arg(long, default_value_t = 50.0)]
    period: f64,
    #[arg(long, default_value_t = 0.5)]
    noise_std: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path (defaults into $VSBT_OUT_DIR or the working dir).
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    /// Input series CSV (single column, optional header).
    input: PathBuf,
    /// Output results JSON path.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// JSON config with hyperparameters and options.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    ar_order: Option<usize>,
    #[arg(long)]
    d_max: Option<usize>,
    /// Number of candidate AR models (defaults to 2^d_max).
    #[arg(long)]
    num_models: Option<usize>,
    /// Split probability applied to every inner node.
    #[arg(long)]
    split_prob: Option<f64>,
    /// Symmetric Dirichlet weight applied to every model.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    prior_a: Option<f64>,
    #[arg(long)]
    prior_b: Option<f64>,
    #[arg(long)]
    max_sweeps: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    /// Pin routing to dyadic midpoints and freeze the gates.
    #[arg(long)]
    fixed_splitting: bool,
    /// Gate/ξ passes per sweep.
    #[arg(long)]
    gate_passes: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ReportArgs {
    /// Results JSON produced by `fit`.
    input: PathBuf,
    /// Output directory for the CSV and SVG.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Output directory for per-seed artifacts and the summary JSON.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Number of replicate seeds.
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    /// First seed; replicates use seed, seed+1, ...
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct Experiment2Args {
    #[command(flatten)]
    common: ExperimentArgs,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 2.0)]
    amplitude: f64,
    #[arg(long, default_value_t = 50.0)]
    period: f64,
    #[arg(long, default_value_t = 0.5)]
    noise_std: f64,
}

/// Default output directory: $VSBT_OUT_DIR if set, else the working dir.
fn out_base() -> PathBuf {
    std::env::var_os("VSBT_OUT_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."))
}

fn resolve_out(explicit: Option<PathBuf>, default_name: &str) -> PathBuf {
    explicit.unwrap_or_else(|| out_base().join(default_name))
}

fn run() -> Result<ExitKind, CliError> {
    let cli = Cli::parse();
    match cli.command {
        Command::Generate(args) => {
            let kind = if args.experiment1 {
                GenerateKind::Experiment1
            } else if args.sine {
                GenerateKind::Sine {
                    n: args.n,
                    amplitude: args.amplitude,
                    period: args.period,
                    noise_std: args.noise_std,
                }
            } else {
                return Err(CliError::Input(
                    "choose a generator: --experiment1 or --sine".into(),
                ));
            };
            let out = resolve_out(args.output, "series.csv");
            let rows = cmd_generate(&kind, args.seed, &out)?;
            println!("wrote {rows} rows to {} (seed {})", out.display(), args.seed);
            Ok(ExitKind::Success)
        }
        Command::Fit(args) => {
            let config = match &args.config {
                Some(path) => ConfigFile::load(path)?,
                None => ConfigFile::default(),
            };
            let flags = FitFlags {
                ar_order: args.ar_order,
                d_max: args.d_max,
                num_models: args.num_models,
                split_prob: args.split_prob,
                alpha: args.alpha,
                prior_a: args.prior_a,
                prior_b: args.prior_b,
                max_sweeps: args.max_sweeps,
                tol: args.tol,
                fixed_splitting: args.fixed_splitting,
                gate_passes: args.gate_passes,
                seed: args.seed,
            };
            let out = resolve_out(args.output, "results.json");
            let outcome = cmd_fit(&args.input, &out, &config, &flags)?;
            let sweeps = outcome.results.trace.len();
            println!(
                "wrote {} ({} sweeps, {})",
                out.display(),
                sweeps,
                if outcome.converged {
                    "converged"
                } else {
                    "stopped at sweep cap"
                }
            );
            Ok(if outcome.converged {
                ExitKind::Success
            } else {
                ExitKind::MaxSweeps
            })
        }
        Command::Report(args) => {
            let out_dir = resolve_out(args.output, "report");
            let (csv, svg) = cmd_report(&args.input, &out_dir)?;
            println!("wrote {} and {}", csv.display(), svg.display());
            Ok(ExitKind::Success)
        }
        Command::Experiment1(args) => {
            let out_dir = resolve_out(args.output, "experiment1");
            let seeds: Vec<u64> = (args.seed..args.seed + args.seeds).collect();
            let summary = cmd_experiment1(&out_dir, &seeds)?;
            println!(
                "experiment1: {}/{} runs recovered both changes, {}/{} needed a deeper fixed-split tree; summary in {}",
                (summary.recovered_fraction * summary.runs.len() as f64).round() as usize,
                summary.runs.len(),
                (summary.fixed_deeper_fraction * summary.runs.len() as f64).round() as usize,
                summary.runs.len(),
                out_dir.join("summary.json").display()
            );
            Ok(ExitKind::Success)
        }
        Command::Experiment2(args) => {
            let out_dir = resolve_out(args.common.output, "experiment2");
            let seeds: Vec<u64> = (args.common.seed..args.common.seed + args.common.seeds).collect();
            let sine = SineSettings {
                n: args.n,
                amplitude: args.amplitude,
                period: args.period,
                noise_std: args.noise_std,
            };
            let summary = cmd_experiment2(&out_dir, &seeds, &sine)?;
            println!(
                "experiment2: {}/{} runs put every split at a change-probability peak; summary in {}",
                (summary.pass_fraction * summary.runs.len() as f64).round() as usize,
                summary.runs.len(),
                out_dir.join("summary.json").display()
            );
            Ok(ExitKind::Success)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(kind) => ExitCode::from(kind.code()),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_kind().code())
        }
    }
}
