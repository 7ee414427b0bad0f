//! Command-line front end: configuration, solve/sweep/check commands and
//! their artifacts.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | I/O or internal failure |
//! | 2 | configuration error |
//! | 3 | solver divergence or failure to converge |
//! | 4 | converged, but a residual exceeds its threshold |
//! | 5 | a verification audit failed |

pub mod config;
pub mod format;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use cmc_core::{CmcError, DivergenceKind};

pub use check::Which;
pub use config::ProblemConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;
pub const EXIT_RESIDUAL: i32 = 4;
pub const EXIT_AUDIT: i32 = 5;

pub const EXIT_CODES: &[(i32, &str)] = &[
    (EXIT_OK, "success"),
    (EXIT_INTERNAL, "I/O or internal failure"),
    (EXIT_CONFIG, "configuration error"),
    (EXIT_DIVERGED, "solver divergence or failure to converge"),
    (EXIT_RESIDUAL, "converged, but a residual exceeds its threshold"),
    (EXIT_AUDIT, "a verification audit failed"),
];

/// Environment variable overriding the output directory.
pub const OUT_DIR_ENV: &str = "CMC_OUT_DIR";

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> CliError {
        CliError { code: EXIT_CONFIG, message: message.into() }
    }
}

impl From<CmcError> for CliError {
    fn from(e: CmcError) -> CliError {
        let code = match &e {
            CmcError::InvalidChart(_)
            | CmcError::InvalidParams(_)
            | CmcError::FieldMismatch(_)
            | CmcError::WeightMismatch { .. }
            | CmcError::Format(_) => EXIT_CONFIG,
            CmcError::Diverging { .. }
            | CmcError::MaxIterations { .. }
            | CmcError::LineSearch { .. }
            | CmcError::CgBreakdown { .. }
            | CmcError::ContinuationStalled { .. }
            | CmcError::Kkt(_) => EXIT_DIVERGED,
            CmcError::Pairing { .. } | CmcError::Io(_) => EXIT_INTERNAL,
        };
        let mut message = e.to_string();
        if let CmcError::Diverging { kind: DivergenceKind::GaussBonnet, .. } = e {
            message.push_str(
                "\nhint: by Gauss–Bonnet a closed surface carries a metric with constant curvature lambda < 0 only if \
                 its Euler characteristic is negative; the torus has χ = 0 (use bolza, or a disk patch)",
            );
        }
        CliError { code, message }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> CliError {
        CliError { code: EXIT_INTERNAL, message: format!("i/o error: {e}") }
    }
}

#[derive(Parser, Debug)]
#[command(name = "cmc", version, about = "Constant mean curvature data on hyperbolic surfaces and patches")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Problem settings; each flag overrides the same key of `--config`.
#[derive(Args, Debug, Default)]
pub struct ProblemArgs {
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// torus-patch | disk-patch | bolza
    #[arg(long)]
    backend: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    n: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    r0: Option<String>,
    /// Ambient curvature (-1, 0 or 1).
    #[arg(long, allow_hyphen_values = true)]
    k: Option<String>,
    /// Mean curvature.
    #[arg(long, allow_hyphen_values = true)]
    c: Option<String>,
    /// zero | const:<b> | file:<path> | basis:<k>:<re>+<im>i
    #[arg(long, allow_hyphen_values = true)]
    beta: Option<String>,
    /// none | bump:<re>+<im>i
    #[arg(long, allow_hyphen_values = true)]
    gauge: Option<String>,
    /// Target volume of the constrained problem.
    #[arg(long, allow_hyphen_values = true)]
    target: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    seed: Option<String>,
    /// Output directory (the CMC_OUT_DIR environment variable takes precedence).
    #[arg(long)]
    out: Option<String>,
    /// Planted fault: none | volume-sign | coupling-sign | hessian-nodal-sign
    #[arg(long)]
    mutant: Option<String>,
    /// Any other key, as key=value (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", allow_hyphen_values = true)]
    set: Vec<String>,
}

impl ProblemArgs {
    /// Defaults, then the config file, then flags.
    pub fn resolve(&self) -> Result<ProblemConfig, CliError> {
        let mut cfg = ProblemConfig::default();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
            cfg.apply_text(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        }
        let flags = [
            ("backend", &self.backend),
            ("n", &self.n),
            ("r0", &self.r0),
            ("k", &self.k),
            ("c", &self.c),
            ("beta", &self.beta),
            ("gauge", &self.gauge),
            ("target", &self.target),
            ("seed", &self.seed),
            ("out", &self.out),
            ("mutant", &self.mutant),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v).map_err(|e| CliError::config(format!("--{key}: {e}")))?;
            }
        }
        for kv in &self.set {
            let (key, value) = kv.split_once('=').ok_or_else(|| CliError::config(format!("--set {kv}: expected KEY=VALUE")))?;
            cfg.set(key.trim(), value).map_err(|e| CliError::config(format!("--set: {e}")))?;
        }
        cfg.solver.validate().map_err(|e| CliError::config(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Axis {
    /// Mean curvature `c` (so `λ = k + c²`).
    C,
    /// Scale `t` of the class, `t·β`.
    BetaScale,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the unconstrained problem and write fields and a report.
    Solve(ProblemArgs),
    /// Solve with prescribed total area `target`; λ is recovered.
    SolveConstrained(ProblemArgs),
    /// Warm-started sweep along one parameter, one CSV row per point.
    Sweep {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long, value_enum)]
        axis: Axis,
        #[arg(long, allow_hyphen_values = true)]
        from: f64,
        #[arg(long, allow_hyphen_values = true)]
        to: f64,
        /// Number of points, endpoints included.
        #[arg(long)]
        steps: usize,
    },
    /// Run verification audits and write manifest.json.
    Check {
        #[arg(value_enum, default_value = "all")]
        which: Which,
        #[command(flatten)]
        problem: ProblemArgs,
    },
    /// Print defaults, tolerances and the exit-code table.
    Info,
}

/// Output directory: `CMC_OUT_DIR` if set, else the `out` key.
pub fn output_dir(cfg: &ProblemConfig) -> PathBuf {
    match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => cfg.out.clone(),
    }
}

/// `println!` that ignores a closed stdout (e.g. piped into `head`).
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}
pub(crate) use out;

mod check;
mod commands;

pub(crate) fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(name), bytes)?;
    Ok(())
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Solve(p) => p.resolve().and_then(|cfg| commands::solve(&cfg)),
        Command::SolveConstrained(p) => p.resolve().and_then(|cfg| commands::solve_constrained(&cfg)),
        Command::Sweep { problem, axis, from, to, steps } => problem.resolve().and_then(|cfg| commands::sweep(&cfg, axis, from, to, steps)),
        Command::Check { which, problem } => problem.resolve().and_then(|cfg| check::check(&cfg, which)),
        Command::Info => commands::info(),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}
