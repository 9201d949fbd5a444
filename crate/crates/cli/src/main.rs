//! `l1csvd`: batch front end for robust decompositions and the experiments
//! built on them.
//!
//! Every option can also come from `--config`, a `key = value` file or the
//! `manifest.json` of an earlier run. Flags win over the file.

mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{ArgAction, Args, Parser, Subcommand};

use crate::commands::Common;
use crate::settings::Settings;

#[derive(Parser)]
#[command(name = "l1csvd", version, about = "Outlier-robust singular values and experiments")]
struct Cli {
    /// Master seed; every random stream is derived from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for trial-level parallelism (0 = one per core).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Directory for all outputs; created if missing.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// `key = value` file or earlier `manifest.json`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Factor one CSV matrix into U, σ and V.
    Decompose(DecomposeArgs),
    /// Monte Carlo singular-value error sweep over outlier power.
    BenchSv(BenchSvArgs),
    /// M_P traces of L1-cSVD from several random starting V.
    Convergence(ConvergenceArgs),
    /// Vowel classification with corrupted training data.
    Vowel(VowelArgs),
    /// Sparse direction finding with jammed snapshots.
    Doa(DoaArgs),
}

#[derive(Args)]
pub struct DecomposeArgs {
    /// Headerless comma-separated matrix, one row per line.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Number of components (0 = min(D, N)).
    #[arg(long)]
    pub k: Option<usize>,
    /// svd, l1csvd or rpca.
    #[arg(long)]
    pub method: Option<String>,
    /// L1-PCA solver: greedy, joint, bit-flip or exhaustive.
    #[arg(long)]
    pub pca_solver: Option<String>,
    #[arg(long)]
    pub max_outer_iter: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    /// Reject V updates that raise M_P.
    #[arg(long)]
    pub monotone: bool,
    /// Sparse weight for rpca, or `none` for 1/sqrt(max(D, N)).
    #[arg(long)]
    pub rpca_lambda: Option<String>,
}

#[derive(Args)]
pub struct BenchSvArgs {
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Outlier subspace dimension.
    #[arg(long)]
    pub k_o: Option<usize>,
    /// Column corruption probability.
    #[arg(long)]
    pub p_o: Option<f64>,
    /// Signal-to-noise ratio in dB, or `none` for noiseless data.
    #[arg(long, allow_hyphen_values = true)]
    pub snr_db: Option<String>,
    /// Lower end of the log-uniform singular value range.
    #[arg(long)]
    pub sv_low: Option<f64>,
    #[arg(long)]
    pub sv_high: Option<f64>,
    /// Comma-separated OSR values in dB.
    #[arg(long, allow_hyphen_values = true)]
    pub osr_grid: Option<String>,
    /// Comma-separated subset of svd, l1pca-project, l1csvd, rpca.
    #[arg(long)]
    pub methods: Option<String>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Treat the SNR as noise energy over signal energy.
    #[arg(long)]
    pub snr_as_written: bool,
    /// Record per-trial wall time (makes the CSV non-reproducible).
    #[arg(long)]
    pub timing: bool,
}

#[derive(Args)]
pub struct ConvergenceArgs {
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Number of random starting V.
    #[arg(long)]
    pub inits: Option<usize>,
    #[arg(long)]
    pub max_outer_iter: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub monotone: bool,
}

#[derive(Args)]
pub struct VowelArgs {
    /// Tab-separated vowel table with a `target` column.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Comma-separated subset of svd, rpca, l1csvd.
    #[arg(long)]
    pub methods: Option<String>,
    /// Components per class, or `none` for all features.
    #[arg(long)]
    pub k_prime: Option<String>,
    /// Corrupted training columns per class.
    #[arg(long)]
    pub corrupt_count: Option<usize>,
    /// Outlier power over the mean entry power.
    #[arg(long)]
    pub power_factor: Option<f64>,
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub n_test: Option<usize>,
}

#[derive(Args)]
pub struct DoaArgs {
    #[arg(long)]
    pub m_sensors: Option<usize>,
    #[arg(long)]
    pub t_snapshots: Option<usize>,
    /// Per-source SNR in dB, or `none`.
    #[arg(long, allow_hyphen_values = true)]
    pub snr_db: Option<String>,
    /// Comma-separated source angles in degrees.
    #[arg(long, allow_hyphen_values = true)]
    pub sources: Option<String>,
    /// Comma-separated jammer angles in degrees (empty for none).
    #[arg(long, allow_hyphen_values = true)]
    pub jammers: Option<String>,
    /// Snapshots hit by each jammer.
    #[arg(long)]
    pub jammer_snapshots: Option<usize>,
    /// Jammer power over source power.
    #[arg(long)]
    pub jammer_power: Option<f64>,
    /// Reduction rank.
    #[arg(long)]
    pub k: Option<usize>,
    /// Group lasso weight as a fraction of the all-zero threshold.
    #[arg(long)]
    pub lambda_fraction: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
}

fn run(cli: Cli) -> Result<()> {
    let settings = match &cli.config {
        Some(p) => Settings::load(p)?,
        None => Settings::default(),
    };
    let name = match &cli.command {
        Command::Decompose(_) => "decompose",
        Command::BenchSv(_) => "bench-sv",
        Command::Convergence(_) => "convergence",
        Command::Vowel(_) => "vowel",
        Command::Doa(_) => "doa",
    };
    settings.check_command(name)?;
    let seed = settings.pick(cli.seed, "seed", 0u64)?;
    let jobs = settings.pick(cli.jobs, "jobs", 0usize)?;
    if jobs > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global().context("configuring worker threads")?;
    }
    commands::prepare_out_dir(&cli.out_dir)?;
    let common = Common { settings, seed, jobs, out_dir: cli.out_dir };
    log::info!("running {name} with seed {seed}");
    match &cli.command {
        Command::Decompose(a) => commands::decompose(&common, a),
        Command::BenchSv(a) => commands::bench_sv(&common, a),
        Command::Convergence(a) => commands::convergence(&common, a),
        Command::Vowel(a) => commands::vowel(&common, a),
        Command::Doa(a) => commands::doa(&common, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
