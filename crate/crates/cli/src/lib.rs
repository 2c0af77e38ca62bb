//! Scenario-driven front end: sweeps, invariant checks and result
//! comparison. The binary in `main.rs` is a thin wrapper over these
//! functions.

pub mod compare;
pub mod output;
pub mod scenario;

use std::path::{Path, PathBuf};

use subcm::solver::{run_sweep, SweepOutcome};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("solver error: {0}")]
    Solve(#[from] subcm::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) | CliError::Shape(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunArgs {
    pub scenario: PathBuf,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub seed: u64,
    pub dump_vectors: bool,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub n_frequencies: usize,
    pub n_traces: usize,
}

fn pool(jobs: Option<usize>) -> Result<rayon::ThreadPool, CliError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        if j == 0 {
            return Err(CliError::Input("--jobs must be at least 1".into()));
        }
        b = b.num_threads(j);
    }
    b.build().map_err(|e| CliError::Failed(format!("cannot start worker pool: {e}")))
}

fn sweep(plan: &scenario::Plan, jobs: Option<usize>, seed: u64) -> Result<SweepOutcome, CliError> {
    let opts = plan.options(seed);
    Ok(pool(jobs)?.install(|| run_sweep(&plan.problem, plan.solver, &plan.frequencies, &opts))?)
}

pub fn run(args: &RunArgs) -> Result<RunSummary, CliError> {
    let plan = scenario::load(&args.scenario)?;
    let out_dir = args
        .out
        .clone()
        .or_else(|| plan.scenario.output.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let outcome = sweep(&plan, args.jobs, args.seed)?;
    std::fs::create_dir_all(&out_dir)?;
    let mut files = vec![];
    let mut write = |name: &str, body: String| -> Result<(), CliError> {
        let p = out_dir.join(name);
        std::fs::write(&p, body)?;
        files.push(p);
        Ok(())
    };
    write("modes.csv", output::modes_csv(&outcome))?;
    let diag = output::diagnostics(&outcome, plan.solver.name(), args.seed);
    write("diagnostics.json", serde_json::to_string_pretty(&diag).map_err(|e| CliError::Failed(e.to_string()))? + "\n")?;
    if args.dump_vectors {
        write("vectors.json", output::vectors_json(&outcome).map_err(|e| CliError::Failed(e.to_string()))? + "\n")?;
    }
    Ok(RunSummary {
        out_dir,
        files,
        n_frequencies: outcome.diagnostics.len(),
        n_traces: outcome.sweep.n_traces,
    })
}

/// Residual limits used by `checks`.
pub const UNITARY_LIMIT: f64 = 1e-8;
pub const POWER_LIMIT: f64 = 1e-8;
pub const EQUIVALENCE_LIMIT: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct CheckLine {
    pub name: &'static str,
    pub value: Option<f64>,
    pub limit: f64,
}

impl CheckLine {
    pub fn pass(&self) -> bool {
        self.value.is_none_or(|v| v <= self.limit)
    }
}

pub fn checks(scenario: &Path, jobs: Option<usize>, seed: u64) -> Result<Vec<CheckLine>, CliError> {
    let plan = scenario::load(scenario)?;
    let outcome = sweep(&plan, jobs, seed)?;
    let w = output::worst(&outcome.diagnostics);
    let flagged = outcome.diagnostics.iter().any(|d| d.flags.non_unitary_background);
    let mut lines = vec![
        CheckLine { name: "unitarity_s", value: w.unitarity_s, limit: UNITARY_LIMIT },
        CheckLine { name: "unitarity_s_b", value: w.unitarity_s_b, limit: UNITARY_LIMIT },
        CheckLine { name: "t_power", value: w.t_power, limit: POWER_LIMIT },
        CheckLine { name: "power_identity", value: w.power_identity, limit: POWER_LIMIT },
        CheckLine { name: "factorization", value: w.factorization, limit: POWER_LIMIT },
        CheckLine { name: "equivalence", value: w.equivalence, limit: EQUIVALENCE_LIMIT },
        CheckLine { name: "circle_excess", value: Some(w.circle_excess), limit: POWER_LIMIT },
    ];
    if !flagged {
        lines.push(CheckLine { name: "orthonormality", value: Some(w.orthonormality), limit: POWER_LIMIT });
    }
    let unconverged = outcome.diagnostics.iter().filter(|d| d.converged == Some(false)).count();
    if outcome.diagnostics.iter().any(|d| d.converged.is_some()) {
        lines.push(CheckLine { name: "iterative_unconverged", value: Some(unconverged as f64), limit: 0.0 });
    }
    Ok(lines)
}

pub fn render_checks(lines: &[CheckLine]) -> String {
    let mut s = String::new();
    for l in lines {
        let v = l.value.map_or("n/a".to_string(), |v| format!("{v:e}"));
        let tag = if l.pass() { "PASS" } else { "FAIL" };
        s.push_str(&format!("{tag} {:<22} {v} (limit {:e})\n", l.name, l.limit));
    }
    s
}
