//! `mfg-kinetic`: batch front end for the mean field game solver.

mod commands;
mod scenario;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mfg_kinetic::MfgError;
use serde_json::Value;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("validation error: {0}")]
    Validation(String),
    #[error(transparent)]
    Solver(#[from] MfgError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Solver(e) if is_validation(e) => 2,
            _ => 1,
        }
    }
}

fn is_validation(e: &MfgError) -> bool {
    matches!(
        e,
        MfgError::NonSimplexInitial(_)
            | MfgError::NonSimplex(_)
            | MfgError::NegativeRate { .. }
            | MfgError::RateExceedsBound { .. }
            | MfgError::DegenerateHorizon(_)
            | MfgError::InvalidParameter(_)
            | MfgError::FamilyUnsupported(_)
            | MfgError::RateDependsOnMeasure
            | MfgError::StateSpaceTooLarge { .. }
            | MfgError::Schema(_)
            | MfgError::Json(_)
    )
}

#[derive(Debug, Parser)]
#[command(name = "mfg-kinetic", version, about = "Finite-state mean field game solver and verification lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// Scenario file `{"model": ..., "run": ...}`.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides `run.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Suppress diagnostics on stderr.
    #[arg(long)]
    pub quiet: bool,
    /// Worker threads (default: machine parallelism).
    #[arg(long, env = "MFG_KINETIC_THREADS")]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the mean field game by damped Picard iteration.
    SolveMfg(Common),
    /// Exact N-player Nash gaps of the mean field policy.
    NashGap {
        #[command(flatten)]
        common: Common,
        /// Directory holding a previous `solve-mfg` run.
        #[arg(long)]
        solution: Option<PathBuf>,
    },
    /// Coupled Monte Carlo of the N-player system against the limit flow.
    McConverge {
        #[command(flatten)]
        common: Common,
        /// Also write the event log of replication 0 for every N.
        #[arg(long)]
        event_log: bool,
    },
    /// Monotonicity of the running and terminal costs.
    CheckMono(Common),
    /// Small-time uniqueness horizon.
    Tstar(Common),
    /// Exact versus Monte Carlo cost of the symmetric mean field policy.
    EvalCost(Common),
}

/// Files produced by a command, written only once the computation finished.
pub struct Outcome {
    pub files: Vec<(&'static str, Vec<u8>)>,
    pub extra_files: Vec<(String, Vec<u8>)>,
    pub summary: serde_json::Map<String, Value>,
    pub converged: bool,
}

impl Default for Outcome {
    fn default() -> Self {
        Outcome {
            files: Vec::new(),
            extra_files: Vec::new(),
            summary: serde_json::Map::new(),
            converged: true,
        }
    }
}

pub struct Diag {
    quiet: bool,
}

impl Diag {
    pub fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

fn write_outcome(out: &Path, outcome: &Outcome) -> Result<(), CliError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| CliError::Io { path, source }
    };
    std::fs::create_dir_all(out).map_err(io(out))?;
    let files = outcome
        .files
        .iter()
        .map(|(n, b)| (n.to_string(), b))
        .chain(outcome.extra_files.iter().map(|(n, b)| (n.clone(), b)));
    for (name, bytes) in files {
        let path = out.join(name);
        std::fs::write(&path, bytes).map_err(io(&path))?;
    }
    Ok(())
}

fn init_threads(threads: Option<usize>) -> Result<(), CliError> {
    match threads {
        Some(0) => Err(CliError::Validation("--threads must be positive".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Validation(format!("thread pool: {e}"))),
        None => Ok(()),
    }
}

fn run(cli: Cli) -> Result<(String, Common, Outcome), CliError> {
    let (name, common) = match &cli.command {
        Command::SolveMfg(c) => ("solve-mfg", c),
        Command::NashGap { common, .. } => ("nash-gap", common),
        Command::McConverge { common, .. } => ("mc-converge", common),
        Command::CheckMono(c) => ("check-mono", c),
        Command::Tstar(c) => ("tstar", c),
        Command::EvalCost(c) => ("eval-cost", c),
    };
    init_threads(common.threads)?;
    let loaded = scenario::load(&common.config)?;
    let seed = common.seed.unwrap_or(loaded.run.seed);
    let diag = Diag { quiet: common.quiet };
    let outcome = match &cli.command {
        Command::SolveMfg(_) => commands::solve_mfg(&loaded, &diag)?,
        Command::NashGap { solution, .. } => commands::nash_gap(&loaded, solution.as_deref(), &diag)?,
        Command::McConverge { event_log, .. } => commands::mc_converge(&loaded, seed, *event_log, &diag)?,
        Command::CheckMono(_) => commands::check_mono(&loaded, seed)?,
        Command::Tstar(_) => commands::tstar(&loaded)?,
        Command::EvalCost(_) => commands::eval_cost(&loaded, seed, &diag)?,
    };
    Ok((name.to_string(), common.clone(), outcome))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, common, mut outcome) = match run(cli) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code());
        }
    };
    if let Err(e) = write_outcome(&common.out, &outcome) {
        eprintln!("error: {e}");
        return ExitCode::from(e.exit_code());
    }
    let mut summary = serde_json::Map::new();
    summary.insert("command".into(), Value::from(name));
    summary.insert("out".into(), Value::from(common.out.display().to_string()));
    summary.insert("converged".into(), Value::from(outcome.converged));
    summary.append(&mut outcome.summary);
    println!("{}", Value::Object(summary));
    if outcome.converged {
        ExitCode::SUCCESS
    } else {
        if !common.quiet {
            eprintln!("fixed-point iteration did not converge; artifacts written with converged=false");
        }
        ExitCode::from(3)
    }
}
