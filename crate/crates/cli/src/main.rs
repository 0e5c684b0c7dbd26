mod commands;
mod config;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use chaosdesign::Error;

use crate::config::{ExperimentConfig, ScanParam};

/// Design chaotic attractors around a periodic skeleton with leaky echo state networks.
#[derive(Debug, Parser)]
#[command(name = "chaosdesign", version)]
struct Cli {
    /// TOML experiment file; flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Reservoir seed (for `search`, a single-seed run).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Spectral scale of the recurrent matrix.
    #[arg(long, global = true)]
    rho: Option<f64>,

    /// Output directory [default: $CHAOSDESIGN_OUT, else ./chaosdesign-out].
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// More log output on stderr (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate or import a skeleton and write it as CSV plus a JSON sidecar.
    Skeleton(SkeletonArgs),
    /// Teacher-force, fit the readout, and save the closed-loop model.
    Train(TrainArgs),
    /// Run a saved model in closed loop and write its report, traces and plots.
    Analyze(AnalyzeArgs),
    /// Sweep rho or the washout length and write bifurcation diagrams.
    Scan(ScanArgs),
    /// Locate the edge and the supervised point, then scan between them.
    Search(SearchArgs),
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("generator").multiple(false)))]
pub struct SkeletonArgs {
    #[arg(long, group = "generator")]
    pub lissajous: bool,
    #[arg(long, group = "generator")]
    pub circle: bool,
    #[arg(long, group = "generator")]
    pub vdp: bool,
    #[arg(long, group = "generator")]
    pub rossler: bool,
    /// Hand-drawn curve, one point per row.
    #[arg(long, group = "generator", value_name = "PATH")]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Circle period in steps.
    #[arg(long)]
    pub period: Option<usize>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    /// Use `z' = 0.2 + x y - c z` for the Rössler flow.
    #[arg(long)]
    pub cross_xy: bool,
    /// Arc-length resampling count for `--csv`.
    #[arg(long)]
    pub resample: Option<usize>,
    /// Treat the CSV points as a closed curve.
    #[arg(long)]
    pub close: bool,
    /// Keep CSV coordinates as they are (no centering or scaling).
    #[arg(long)]
    pub raw: bool,
    /// Scale any skeleton to zero mean and max-abs 1.
    #[arg(long, conflicts_with = "raw")]
    pub normalize: bool,
    /// File stem of the outputs.
    #[arg(long, default_value = "skeleton")]
    pub name: String,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Skeleton CSV (as written by `skeleton`); overrides the config.
    #[arg(long)]
    pub skeleton: Option<PathBuf>,
    #[arg(long)]
    pub nodes: Option<usize>,
    #[arg(long)]
    pub leak: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub t_init: Option<usize>,
    #[arg(long)]
    pub t_train: Option<usize>,
    /// Model directory [default: <out>/model].
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Model directory [default: <out>/model].
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    #[command(flatten)]
    pub train: TrainArgs,
    #[arg(long, value_enum)]
    pub param: Option<ScanParam>,
    #[arg(long)]
    pub from: Option<f64>,
    #[arg(long)]
    pub to: Option<f64>,
    #[arg(long)]
    pub step: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[command(flatten)]
    pub train: TrainArgs,
    /// Comma-separated reservoir seeds.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Stop each interval scan after this many candidates.
    #[arg(long)]
    pub stop_after: Option<usize>,
    /// Scan from past the edge downward (pairs well with --stop-after).
    #[arg(long)]
    pub descending: bool,
    /// Visit at most this many scan points per seed.
    #[arg(long)]
    pub max_scan_points: Option<usize>,
    /// Candidates per seed that get a closed-loop plot.
    #[arg(long, default_value_t = 3)]
    pub plots: usize,
}

/// Resolved configuration and output directory.
pub struct Context {
    pub cfg: ExperimentConfig,
    pub out: PathBuf,
    pub rho_given: bool,
    pub seed_given: bool,
}

fn context(cli: &Cli) -> chaosdesign::Result<Context> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.reservoir.seed = seed;
        cfg.search.seeds = vec![seed];
    }
    if let Some(rho) = cli.rho {
        cfg.reservoir.spectral_scale = rho;
    }
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.output.dir.clone())
        .or_else(|| std::env::var_os("CHAOSDESIGN_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("chaosdesign-out"));
    Ok(Context {
        cfg,
        out,
        rho_given: cli.rho.is_some(),
        seed_given: cli.seed.is_some(),
    })
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Bracket { .. } => 4,
        Error::Numeric(_) | Error::Solver(_) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .init();

    let result = context(&cli).and_then(|ctx| match &cli.command {
        Command::Skeleton(a) => commands::skeleton(ctx, a),
        Command::Train(a) => commands::train(ctx, a),
        Command::Analyze(a) => commands::analyze(ctx, a),
        Command::Scan(a) => commands::scan(ctx, a),
        Command::Search(a) => commands::search(ctx, a),
    });
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
