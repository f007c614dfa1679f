use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ptaa::cli::{cmd_compare, cmd_run, cmd_sweep, CompareVariant};
use ptaa::config::RunConfig;
use ptaa::error::Error;

#[derive(Parser)]
#[command(
    name = "ptaa",
    about = "Parallel sampler for first-order diffusion samplers on analytic score models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the sequential oracle plus the configured parallel variant.
    Run {
        /// Run-config file (TOML).
        config: PathBuf,
        /// Print per-iteration progress to stderr.
        #[arg(long)]
        verbose: bool,
    },
    /// Compare variants seed-by-seed against the oracle.
    Compare {
        config: PathBuf,
        /// Comma-separated subset of fp,fp-plus,aa,aa-plus,taa.
        #[arg(long, value_delimiter = ',')]
        variants: Vec<String>,
        /// Order grid for the swept fixed-point baseline.
        #[arg(long, value_delimiter = ',')]
        k_grid: Vec<usize>,
        /// Output CSV; defaults to run.compare_csv or compare.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mean iterations over a (k, m) grid.
    Sweep {
        config: PathBuf,
        #[arg(long, value_delimiter = ',')]
        k_grid: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        m_grid: Vec<usize>,
        /// Output CSV; defaults to run.sweep_csv or sweep.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_)
        | Error::Schedule(_)
        | Error::Model(_)
        | Error::SolverConfig(_)
        | Error::TrajectoryFile { .. }
        | Error::IncompatibleTrajectory(_) => 2,
        _ => 1,
    }
}

fn dispatch(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::Run { config, verbose } => {
            let cfg = RunConfig::load(&config)?;
            let outcome = cmd_run(&cfg, verbose)?;
            for s in &outcome.summaries {
                println!(
                    "seed {:>4}  status {:<13} iterations {:>5}  evals {:>7}  distance {:.3e}",
                    s.seed,
                    s.status.to_string(),
                    s.iterations,
                    s.total_evals,
                    s.distance_to_oracle
                );
            }
            if cfg.run.require_convergence && !outcome.all_converged {
                eprintln!("error: convergence required but not reached");
                return Ok(3);
            }
            Ok(0)
        }
        Command::Compare {
            config,
            variants,
            k_grid,
            out,
        } => {
            let cfg = RunConfig::load(&config)?;
            let variants: Vec<CompareVariant> = if variants.is_empty() {
                CompareVariant::ALL.to_vec()
            } else {
                variants
                    .iter()
                    .map(|s| s.parse())
                    .collect::<Result<_, _>>()?
            };
            let out_path = out
                .or_else(|| cfg.run.compare_csv.clone())
                .unwrap_or_else(|| PathBuf::from("compare.csv"));
            let grid = if k_grid.is_empty() {
                None
            } else {
                Some(k_grid.as_slice())
            };
            let rows = cmd_compare(&cfg, &variants, grid, Some(&out_path))?;
            println!("wrote {} rows to {}", rows.len(), out_path.display());
            Ok(0)
        }
        Command::Sweep {
            config,
            k_grid,
            m_grid,
            out,
        } => {
            let cfg = RunConfig::load(&config)?;
            let steps = cfg.schedule.steps;
            let dim = cfg.dim();
            let k_grid = if k_grid.is_empty() {
                ptaa::cli::default_k_grid(steps, cfg.solver.window.unwrap_or(steps))
            } else {
                k_grid
            };
            let m_grid = if m_grid.is_empty() {
                (1..=4).filter(|&m| m < dim).collect()
            } else {
                m_grid
            };
            let out_path = out
                .or_else(|| cfg.run.sweep_csv.clone())
                .unwrap_or_else(|| PathBuf::from("sweep.csv"));
            let cells = cmd_sweep(&cfg, &k_grid, &m_grid, Some(&out_path))?;
            println!("wrote {} cells to {}", cells.len(), out_path.display());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
