use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use wiretap_cli::commands::{cmd_oracle, cmd_solve, cmd_sweep, cmd_verify};
use wiretap_cli::{Exit, Flags, Problem, SchemeChoice};

#[derive(Parser)]
#[command(name = "wiretap-opt", version, about = "Secrecy rate under receiver energy constraints")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Report rates in bits instead of nats.
    #[arg(long, global = true)]
    bits: bool,
    /// Seed for the random restarts.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// KKT residual tolerance.
    #[arg(long, global = true)]
    tol_kkt: Option<f64>,
    /// Outer iteration cap.
    #[arg(long, global = true)]
    max_iters: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one problem file.
    Solve { problem: PathBuf },
    /// Sweep the first constraint block's level and write CSV.
    Sweep {
        problem: PathBuf,
        /// Inclusive grid `start:stop:count`.
        #[arg(long)]
        grid: Option<String>,
        /// mean, an, plain or all.
        #[arg(long)]
        scheme: Option<String>,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the optimality certificates of a solved or replayed point.
    Verify { problem: PathBuf },
    /// Compare the solver with a brute-force grid search.
    Oracle {
        problem: PathBuf,
        #[arg(long, default_value_t = 200)]
        resolution: usize,
    },
}

fn init_threads() -> Result<()> {
    if let Ok(n) = std::env::var("WIRETAP_OPT_THREADS") {
        let n: usize = n.parse().with_context(|| format!("WIRETAP_OPT_THREADS=`{n}` is not a count"))?;
        #[cfg(feature = "parallel")]
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
        #[cfg(not(feature = "parallel"))]
        let _ = n;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<Exit> {
    init_threads()?;
    let flags = Flags { bits: cli.bits, seed: cli.seed, tol_kkt: cli.tol_kkt, max_iters: cli.max_iters };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let exit = match cli.command {
        Command::Solve { problem } => cmd_solve(&Problem::load(&problem)?, &flags, &mut out)?,
        Command::Verify { problem } => cmd_verify(&Problem::load(&problem)?, &flags, &mut out)?,
        Command::Oracle { problem, resolution } => cmd_oracle(&Problem::load(&problem)?, &flags, resolution, &mut out)?,
        Command::Sweep { problem, grid, scheme, out: path } => {
            let problem = Problem::load(&problem)?;
            let choice = scheme.as_deref().map(SchemeChoice::parse).transpose()?;
            match path {
                Some(path) => {
                    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
                    let mut w = BufWriter::new(file);
                    let exit = cmd_sweep(&problem, &flags, grid.as_deref(), choice, &mut w)?;
                    w.flush()?;
                    exit
                }
                None => cmd_sweep(&problem, &flags, grid.as_deref(), choice, &mut out)?,
            }
        }
    };
    out.flush()?;
    Ok(exit)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(exit) => ExitCode::from(exit as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(Exit::Fail as u8)
        }
    }
}
