//! `causalis` command-line front end.
//!
//! Every command prints a versioned JSON report on stdout. Exit status: 0 for success or
//! a positive verdict, 1 for a negative verdict (invalid, nonseparable, noncausal), 2 for
//! usage and input errors.

mod commands;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

pub const SCHEMA: &str = "causalis.report.v1";
const TOL_RANGE: (f64, f64) = (1e-14, 1e-2);

#[derive(Debug, Parser)]
#[command(
    name = "causalis",
    version,
    about = "Process matrices, causal separability and causal inequalities"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every command.
#[derive(Debug, Clone, Args, Serialize)]
pub struct Common {
    /// Input file; repeat for commands that take several.
    #[arg(long = "in", value_name = "PATH")]
    pub inputs: Vec<PathBuf>,
    /// Output file for the command's artifact.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// RNG seed, required by commands that sample.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Tolerance override, within [1e-14, 1e-2].
    #[arg(long)]
    pub tol: Option<f64>,
    /// Iteration cap for iterative solvers.
    #[arg(long = "max-iters")]
    pub max_iters: Option<usize>,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(untagged)]
pub enum Command {
    /// Check positivity and normalization of a process (`--in process.json`).
    Validate {
        #[command(flatten)]
        #[serde(flatten)]
        common: Common,
    },
    /// Build the quantum switch; `--out` receives the process JSON.
    Switch {
        #[command(flatten)]
        #[serde(flatten)]
        common: Common,
        /// Amplitude of the A-then-B branch, e.g. `0.6` or `0.6+0.8i`.
        #[arg(long, default_value = "0.7071067811865476")]
        alpha: String,
        /// Amplitude of the B-then-A branch.
        #[arg(long, default_value = "0.7071067811865476")]
        beta: String,
        /// Comma-separated target amplitudes.
        #[arg(long, default_value = "1,0")]
        target: String,
    },
    /// Born-rule table (`--in process.json --in instruments.json`); `--out` receives CSV.
    Born {
        #[command(flatten)]
        #[serde(flatten)]
        common: Common,
    },
    /// Causal separability certificate (`--in process.json --seed N`).
    Sep {
        #[command(flatten)]
        #[serde(flatten)]
        common: Common,
        /// Party order such as `A<B<F`; repeat for each order. Defaults depend on the parties.
        #[arg(long = "order")]
        orders: Vec<String>,
        /// Witness battery size per order (the same number of mixtures is added).
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Causal bound, inequality score and causal-polytope membership.
    Ineq {
        #[command(flatten)]
        #[serde(flatten)]
        common: Common,
        /// `gyni`, `lgyni`, `ocb`, or a game JSON file.
        #[arg(long)]
        game: Option<String>,
        /// Parties kept when a table is computed from a process.
        #[arg(long, value_delimiter = ',')]
        keep: Vec<String>,
    },
    /// Decide whether two qubit unitaries commute or anticommute with one switch query.
    Demo {
        #[command(flatten)]
        #[serde(flatten)]
        common: Common,
        /// One of I, X, Y, Z, H, S, T.
        #[arg(long)]
        u: String,
        #[arg(long)]
        v: String,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Validate { .. } => "validate",
            Command::Switch { .. } => "switch",
            Command::Born { .. } => "born",
            Command::Sep { .. } => "sep",
            Command::Ineq { .. } => "ineq",
            Command::Demo { .. } => "demo",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Validate { common }
            | Command::Switch { common, .. }
            | Command::Born { common }
            | Command::Sep { common, .. }
            | Command::Ineq { common, .. }
            | Command::Demo { common, .. } => common,
        }
    }
}

/// Usage or input error; always exit status 2.
#[derive(Debug)]
pub struct Failure(pub String);

impl From<causalis::Error> for Failure {
    fn from(e: causalis::Error) -> Self {
        Failure(e.to_string())
    }
}

/// Command result: the payload and whether the verdict was positive.
pub struct Outcome {
    pub result: Value,
    pub positive: bool,
    /// Write the report itself to `--out` (commands without another artifact).
    pub report_to_out: bool,
}

fn check_common(c: &Common) -> Result<(), Failure> {
    if let Some(tol) = c.tol {
        if !(TOL_RANGE.0..=TOL_RANGE.1).contains(&tol) {
            return Err(Failure(format!(
                "--tol {tol:e} outside [{:e}, {:e}]",
                TOL_RANGE.0, TOL_RANGE.1
            )));
        }
    }
    if c.max_iters == Some(0) {
        return Err(Failure("--max-iters must be positive".into()));
    }
    Ok(())
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("CAUSALIS_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure(format!("CAUSALIS_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure(e.to_string()))
}

fn run(command: &Command) -> Result<ExitCode, Failure> {
    configure_threads()?;
    check_common(command.common())?;
    let start = Instant::now();
    let outcome = commands::dispatch(command)?;
    let report = json!({
        "schema": SCHEMA,
        "command": command.name(),
        "config": serde_json::to_value(command).map_err(|e| Failure(e.to_string()))?,
        "result": outcome.result,
        "wall_time_s": start.elapsed().as_secs_f64(),
        "version": env!("CARGO_PKG_VERSION"),
    });
    let text = serde_json::to_string_pretty(&report).map_err(|e| Failure(e.to_string()))?;
    if outcome.report_to_out {
        if let Some(path) = &command.common().out {
            commands::write(path, &text)?;
        }
    }
    // a closed stdout (e.g. piped into `head`) is not an error
    let _ = writeln!(std::io::stdout().lock(), "{text}");
    Ok(if outcome.positive {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(code) => code,
        Err(Failure(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
