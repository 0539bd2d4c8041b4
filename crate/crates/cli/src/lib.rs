//! Command line front end: `fuse`, `analyze`, `simulate`, `segment`,
//! `metrics` and `tta`.
//!
//! Exit status is 0 on success, 1 on runtime failure and 2 on configuration or
//! usage errors. Failures print one JSON record on stderr:
//! `{"error":"<code>","message":"..."}`.

pub mod commands;
pub mod config;
mod output;

use std::ffi::OsString;
use std::fmt;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use ldvqe_core::vio::ReportFormat;

pub use config::RunConfig;

#[derive(Debug, Parser)]
#[command(
    name = "ldvqe",
    version,
    about = "Low-delay compressed video enhancement toolkit"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Verb,
}

#[derive(Debug, Subcommand)]
pub enum Verb {
    /// Enhance three variants and fuse them with the context-aware plan.
    Fuse(CommonArgs),
    /// Per-frame PSNR change of trimmed-window enhancement vs. the full clip.
    Analyze(CommonArgs),
    /// Degrade a clip with the low-delay quantization model (or an external encoder).
    Simulate(CommonArgs),
    /// Cut a clip into non-overlapping fixed-length segments.
    Segment(CommonArgs),
    /// PSNR and loss terms of a clip against ground truth.
    Metrics(CommonArgs),
    /// Enhance with test-time augmentation over flips and rotations.
    Tta(CommonArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Input clip (`.y4m`, or headerless `.yuv` described by the `[raw]` config section).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Ground-truth clip for PSNR and loss reporting.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Output clip, report file, or segment directory depending on the command.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// TOML configuration file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Report format: `json` (default) or `csv`.
    #[arg(long, value_parser = parse_report_format)]
    pub report: Option<ReportFormat>,
    /// Where to write the report (defaults next to the output).
    #[arg(long)]
    pub report_path: Option<PathBuf>,
    /// Worker threads (results do not depend on this).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Gradient-energy threshold of the motion heuristic.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Frames enhanced for the SHORT variant.
    #[arg(long)]
    pub short_len: Option<usize>,
    /// Frames enhanced for the INTRA variant.
    #[arg(long)]
    pub intra_len: Option<usize>,
    /// Frames after the first that are taken from SHORT.
    #[arg(long)]
    pub head_len: Option<usize>,
    /// Route frame 0 to SHORT when the average-frame gradient is below tau.
    #[arg(long)]
    pub invert_heuristic: bool,
    /// Seed for the simulator's optional dither.
    #[arg(long)]
    pub seed: Option<u64>,
}

fn parse_report_format(s: &str) -> Result<ReportFormat, String> {
    s.parse().map_err(|e: ldvqe_core::Error| e.to_string())
}

#[derive(Debug)]
pub struct CliError {
    pub code: String,
    pub message: String,
    pub exit: i32,
}

impl CliError {
    pub fn runtime(e: ldvqe_core::Error) -> Self {
        CliError {
            code: e.code().to_string(),
            message: e.to_string(),
            exit: 1,
        }
    }

    pub fn config(e: ldvqe_core::Error) -> Self {
        CliError {
            code: "config".into(),
            message: e.to_string(),
            exit: 2,
        }
    }

    pub fn config_msg(message: impl Into<String>) -> Self {
        CliError {
            code: "config".into(),
            message: message.into(),
            exit: 2,
        }
    }

    pub fn with_code(code: &str, message: impl Into<String>) -> Self {
        CliError {
            code: code.into(),
            message: message.into(),
            exit: 1,
        }
    }

    pub fn record(&self) -> String {
        serde_json::json!({ "error": self.code, "message": self.message }).to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl std::error::Error for CliError {}

impl From<ldvqe_core::Error> for CliError {
    fn from(e: ldvqe_core::Error) -> Self {
        CliError::runtime(e)
    }
}

/// Merges the config file (if any) with command line overrides.
pub fn resolve_config(args: &CommonArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if args.input.is_some() {
        cfg.input = args.input.clone();
    }
    if args.gt.is_some() {
        cfg.gt = args.gt.clone();
    }
    if args.output.is_some() {
        cfg.output = args.output.clone();
    }
    if args.report.is_some() {
        cfg.report = args.report;
    }
    if args.report_path.is_some() {
        cfg.report_path = args.report_path.clone();
    }
    if args.threads.is_some() {
        cfg.threads = args.threads;
    }
    if let Some(t) = args.tau {
        cfg.heuristic.tau = t;
    }
    if let Some(v) = args.short_len {
        cfg.fusion.short_len = v;
    }
    if let Some(v) = args.intra_len {
        cfg.fusion.intra_len = v;
    }
    if let Some(v) = args.head_len {
        cfg.fusion.head_len = v;
    }
    if args.invert_heuristic {
        cfg.heuristic.slow_motion_when_gradient_at_least_tau =
            !cfg.heuristic.slow_motion_when_gradient_at_least_tau;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

type Command = fn(&RunConfig) -> Result<(), CliError>;

/// Runs one verb.
pub fn execute(verb: &Verb) -> Result<(), CliError> {
    let (args, run): (&CommonArgs, Command) = match verb {
        Verb::Fuse(a) => (a, commands::cmd_fuse),
        Verb::Analyze(a) => (a, commands::cmd_analyze),
        Verb::Simulate(a) => (a, commands::cmd_simulate),
        Verb::Segment(a) => (a, commands::cmd_segment),
        Verb::Metrics(a) => (a, commands::cmd_metrics),
        Verb::Tta(a) => (a, commands::cmd_tta),
    };
    let cfg = resolve_config(args)?;
    match cfg.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::config_msg(format!("thread pool: {e}")))?;
            pool.install(|| run(&cfg))
        }
        None => run(&cfg),
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "{}", e.record());
            e.exit
        }
    }
}
