mod commands;
mod error;
mod plot;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use error::CliError;

#[derive(Parser)]
#[command(name = "reel", version, about = "Simulate phase-field models, compress the data and learn their parameters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print a preset configuration as TOML
    Preset {
        /// heat, sintering, sintering-lite or nanovoid
        #[arg(long)]
        model: String,
        /// Grid points per side
        #[arg(long, default_value_t = 32)]
        size: usize,
    },
    /// Run a simulation and write the trajectory file
    Simulate {
        /// Configuration file (TOML)
        #[arg(long, conflicts_with = "model", required_unless_present = "model")]
        config: Option<PathBuf>,
        /// Use the preset for this model instead of a file
        #[arg(long)]
        model: Option<String>,
        #[arg(long, default_value_t = 32, requires = "model")]
        size: usize,
        /// Override the number of steps
        #[arg(long)]
        steps: Option<usize>,
        /// Override the seed
        #[arg(long)]
        seed: Option<u64>,
        /// Override the timestep
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long, short)]
        out: PathBuf,
        /// Directory for PNG snapshots of the final state
        #[arg(long)]
        png: Option<PathBuf>,
    },
    /// Spectral split and random projection of a trajectory
    Preprocess {
        /// Trajectory file
        dataset: PathBuf,
        #[command(flatten)]
        compress: CompressArgs,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Fit parameters by SGD and write a per-epoch CSV
    Train(TrainArgs),
    /// Rollout error of a parameter file on held-out initial conditions
    Eval {
        /// Parameter file written by `train`
        #[arg(long)]
        theta: PathBuf,
        /// Model configuration (TOML)
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(1..))]
        rollout_steps: u64,
        #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
        n_ics: u64,
        /// First initial-condition seed; the others follow consecutively
        #[arg(long, default_value_t = 1000)]
        ic_seed: u64,
        /// CSV output; stdout when absent
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Run a built-in property suite and print a pass/fail table
    Verify {
        /// vfdd, jl, taylor, gradcheck, conservation or all
        #[arg(long)]
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args, Clone)]
pub struct CompressArgs {
    /// Fixed magnitude threshold. The DFT is unnormalized, so useful values
    /// grow with the number of grid points.
    #[arg(long, group = "threshold")]
    pub beta: Option<f64>,
    /// Keep roughly this percentage of the largest bins
    #[arg(long, group = "threshold")]
    pub keep_top: Option<f64>,
    /// Threshold at this percentile of the bin magnitudes [default: 90]
    #[arg(long, group = "threshold")]
    pub percentile: Option<f64>,
    /// Projected dimension as a fraction of the grid size
    #[arg(long, default_value_t = 0.1)]
    pub ratio: f64,
    /// Projection seed (the frequency projection uses seed + 1)
    #[arg(long, default_value_t = 0)]
    pub proj_seed: u64,
    /// Weight of the frequency-domain term [default: 1, or the value stored
    /// in a compressed dataset]
    #[arg(long)]
    pub lambda: Option<f64>,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Compressed dataset, or a trajectory file (compressed on the fly, or
    /// used directly with --baseline)
    pub dataset: PathBuf,
    /// Train on the uncompressed data with the plain squared-error loss
    #[arg(long)]
    pub baseline: bool,
    #[command(flatten)]
    pub compress: CompressArgs,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    pub epochs: u64,
    /// Learning rate; when absent the grid 1e-1..1e-5 is searched
    #[arg(long)]
    pub lr: Option<f64>,
    /// Epochs per candidate in the learning-rate search
    #[arg(long, default_value_t = 20)]
    pub probe_epochs: usize,
    #[arg(long, default_value_t = 32, value_parser = clap::value_parser!(u64).range(1..))]
    pub batch: u64,
    /// Seed for initialization and batch order
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Per-epoch CSV; stdout when absent
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Learned parameters (TOML)
    #[arg(long)]
    pub theta_out: Option<PathBuf>,
    /// Full run report (TOML)
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Held-out initial conditions for a rollout check after training
    #[arg(long, default_value_t = 0)]
    pub eval_ics: usize,
    #[arg(long, default_value_t = 200)]
    pub rollout_steps: usize,
    /// PNG of the loss curve
    #[arg(long)]
    pub png: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Preset { model, size } => commands::preset(&model, size),
        Command::Simulate {
            config,
            model,
            size,
            steps,
            seed,
            dt,
            out,
            png,
        } => commands::simulate(config.as_deref(), model.as_deref(), size, steps, seed, dt, &out, png.as_deref()),
        Command::Preprocess { dataset, compress, out } => commands::preprocess(&dataset, &compress, &out),
        Command::Train(args) => commands::train(&args),
        Command::Eval {
            theta,
            config,
            rollout_steps,
            n_ics,
            ic_seed,
            out,
        } => commands::eval(&theta, &config, rollout_steps as usize, n_ics as usize, ic_seed, out.as_deref()),
        Command::Verify { suite, seed } => verify::run(&suite, seed),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code() as u8)
        }
    }
}
