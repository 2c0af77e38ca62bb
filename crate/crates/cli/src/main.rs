use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use subcm_cli::{checks, compare, render_checks, run, CliError, RunArgs};

#[derive(Parser)]
#[command(name = "subcm", version, about = "Substructure characteristic mode sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a frequency sweep and write modes.csv and diagnostics.json.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (default: available parallelism).
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Also write vectors.json with a and f of every mode.
        #[arg(long)]
        dump_vectors: bool,
    },
    /// Match modes of two result files per frequency.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        tol: f64,
        /// Only compare the leading N modes of each file.
        #[arg(long)]
        top: Option<usize>,
    },
    /// Run the sweep and report only the invariant residuals.
    Checks {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { scenario, out, jobs, seed, dump_vectors } => {
            let s = run(&RunArgs { scenario, out, jobs, seed, dump_vectors })?;
            println!("{} frequencies, {} traces", s.n_frequencies, s.n_traces);
            for f in s.files {
                println!("wrote {}", f.display());
            }
            Ok(())
        }
        Command::Compare { a, b, tol, top } => {
            let r = compare::compare_files(&a, &b, tol, top)?;
            print!("{}", compare::render(&r, tol));
            if r.pass {
                Ok(())
            } else {
                let (f, rank, d) = r.violations[0];
                Err(CliError::Failed(format!("deviation {d:e} at frequency_hz={f:e} mode_rank={rank}")))
            }
        }
        Command::Checks { scenario, jobs, seed } => {
            let lines = checks(&scenario, jobs, seed)?;
            print!("{}", render_checks(&lines));
            if lines.iter().all(|l| l.pass()) {
                Ok(())
            } else {
                Err(CliError::Failed("invariant checks failed".into()))
            }
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
