//! `salab`: run depth, schedule, annealing, and spectral experiments from
//! the command line.
//!
//! Exit codes: 0 success, 1 experiment-level failure (divergence or a failed
//! bound check), 2 invalid input.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use salab_core::error::Error;
use salab_core::harness::{
    depth_from_spec, refit_tail, run_anneal, run_gibbs_tail, run_spectral_gap, run_spectral_sweep,
    validate_schedule, ExperimentConfig, LandscapeSpec, RunOptions, RunStatus,
};
use salab_core::persist;
use salab_core::schedule::Verdict;

#[derive(Parser)]
#[command(name = "salab", version, about = "Annealing laboratory for logarithmically cooled Langevin dynamics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct LandscapeArgs {
    /// Catalog id: quadratic, double_well, triple_well, double_well_2d.
    #[arg(long)]
    landscape: String,
    /// Tilt parameter for the double wells.
    #[arg(long)]
    a: Option<f64>,
    /// Dimension for the quadratic.
    #[arg(long)]
    dim: Option<usize>,
    /// Half-width of the quadratic's box.
    #[arg(long)]
    half_width: Option<f64>,
}

impl LandscapeArgs {
    fn spec(&self) -> LandscapeSpec {
        let mut params = BTreeMap::new();
        if let Some(a) = self.a {
            params.insert("a".to_string(), a);
        }
        if let Some(d) = self.dim {
            params.insert("dim".to_string(), d as f64);
        }
        if let Some(w) = self.half_width {
            params.insert("half_width".to_string(), w);
        }
        LandscapeSpec {
            id: self.landscape.clone(),
            params,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Compute local minima, saddle heights, and the critical depth.
    Depth {
        #[command(flatten)]
        landscape: LandscapeArgs,
        /// Grid cells per axis (repeat for multiple axes).
        #[arg(long)]
        cells: Vec<usize>,
        /// Write the JSON report here as well as stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the step-size conditions for convergence.
    ValidateSchedule {
        #[arg(long, default_value_t = 1.0)]
        eta0: f64,
        #[arg(long)]
        theta: f64,
        /// E*/E; must lie in (0, 1).
        #[arg(long)]
        depth_ratio: f64,
        #[arg(long, default_value_t = 1_000_000)]
        horizon: u64,
    },
    /// Run the annealing experiment described by a JSON config.
    Anneal {
        /// Path to the experiment config (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides the config's output_dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads for the chain pool.
        #[arg(long)]
        workers: Option<usize>,
        /// Run even when the schedule verdict is invalid or E <= E*.
        #[arg(long)]
        force: bool,
        /// Restart over an existing run directory.
        #[arg(long)]
        resume: bool,
        /// Stream per-chain checkpoints to trajectories.csv.
        #[arg(long)]
        record_traj: bool,
        /// Include coordinate columns in trajectories.csv (d <= 3).
        #[arg(long)]
        record_x: bool,
    },
    /// Gibbs-measure exceedance probability by quadrature.
    GibbsTail {
        #[command(flatten)]
        landscape: LandscapeArgs,
        #[arg(long)]
        tau: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        cells: Vec<usize>,
    },
    /// Spectral gap of the 1-D generator; a decreasing tau sweep fits the
    /// barrier out of the low-temperature gap decay.
    Spectral {
        #[command(flatten)]
        landscape: LandscapeArgs,
        /// One or more temperatures (comma separated, decreasing).
        #[arg(long, value_delimiter = ',')]
        tau: Vec<f64>,
        #[arg(long, default_value_t = 2048)]
        cells: usize,
    },
    /// Re-fit the decay exponent of an existing tail.csv.
    Fit {
        #[arg(long)]
        tail: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        burn_in_theta: f64,
        #[arg(long, default_value_t = 5)]
        min_exceed: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::InvalidInput(_)
        | Error::DomainExceeded(_)
        | Error::Unsupported(_)
        | Error::Degenerate(_)
        | Error::Resource(_)
        | Error::InsufficientData(_) => 2,
        _ => 1,
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), Error> {
    println!("{}", persist::to_json_string(value)?);
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Depth {
            landscape,
            cells,
            out,
        } => {
            let cells_opt = if cells.is_empty() { None } else { Some(cells.as_slice()) };
            let (_, report) = depth_from_spec(&landscape.spec(), cells_opt, None)?;
            print_json(&report)?;
            if let Some(path) = out {
                persist::write_json(&path, &report)?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::ValidateSchedule {
            eta0,
            theta,
            depth_ratio,
            horizon,
        } => {
            let report = validate_schedule(eta0, theta, depth_ratio, horizon)?;
            print_json(&report)?;
            Ok(match report.verdict {
                Verdict::Valid => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            })
        }
        Command::Anneal {
            config,
            out,
            seed,
            workers,
            force,
            resume,
            record_traj,
            record_x,
        } => {
            let text = std::fs::read_to_string(&config)?;
            let mut cfg: ExperimentConfig = serde_json::from_str(&text)
                .map_err(|e| Error::InvalidInput(format!("config {}: {e}", config.display())))?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if record_traj || record_x {
                cfg.record_trajectories = true;
            }
            if record_x {
                cfg.record_x = true;
            }
            let out_dir = out
                .or_else(|| cfg.output_dir.clone())
                .ok_or_else(|| Error::InvalidInput("no output directory: set --out or output_dir".into()))?;
            let mut opts = RunOptions::default();
            if let Some(w) = workers {
                opts.workers = w.max(1);
            }
            opts.force = force;
            opts.resume = resume;
            let result = run_anneal(&cfg, &out_dir, &opts)?;
            print_json(&result)?;
            let failed = result.status == RunStatus::Failed
                || result.bound_check.as_ref().is_some_and(|b| !b.holds);
            Ok(if failed { ExitCode::from(1) } else { ExitCode::SUCCESS })
        }
        Command::GibbsTail {
            landscape,
            tau,
            delta,
            cells,
        } => {
            let cells_opt = if cells.is_empty() { None } else { Some(cells.as_slice()) };
            let report = run_gibbs_tail(&landscape.spec(), tau, delta, cells_opt)?;
            print_json(&report)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Spectral {
            landscape,
            tau,
            cells,
        } => {
            match tau.as_slice() {
                [] => Err(Error::InvalidInput("pass at least one --tau".into())),
                [single] => {
                    let report = run_spectral_gap(&landscape.spec(), *single, cells)?;
                    print_json(&report)?;
                    Ok(ExitCode::SUCCESS)
                }
                many => {
                    let report = run_spectral_sweep(&landscape.spec(), many, cells)?;
                    print_json(&report)?;
                    Ok(ExitCode::SUCCESS)
                }
            }
        }
        Command::Fit {
            tail,
            burn_in_theta,
            min_exceed,
        } => {
            let fit = refit_tail(&tail, burn_in_theta, min_exceed)?;
            print_json(&fit)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

