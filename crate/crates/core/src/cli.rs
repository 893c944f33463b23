//! The `sarkit` command line.
//!
//! ```text
//! sarkit <simulate|trigger|process|image|metrics|budget|figure <id>>
//!        [--scenario PATH] [--seed N] [--out DIR] [--mode mono|bistatic|both]
//!        [--threads K]
//! ```
//!
//! On success a JSON summary goes to stdout and the exit status is 0. On
//! failure one JSON record `{"error": kind, "stage": ..., "message": ...}`
//! goes to stderr and the exit status is 1.

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::pipeline::{self, Context};
use crate::scenario::{Mode, Scenario};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "sarkit",
    version,
    about = "Multistatic OFDM radar simulation and SAR processing"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Scenario file (TOML); built-in defaults when omitted.
    #[arg(long, global = true)]
    pub scenario: Option<PathBuf>,

    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,

    /// Receiver chains to run; defaults to the scenario setting.
    #[arg(long, global = true, value_enum)]
    pub mode: Option<ModeArg>,

    /// Worker threads; all available cores when omitted.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate received signals of every receiver.
    Simulate,
    /// Detect PN preambles in a simulated sample stream.
    Trigger,
    /// Range-compress the simulated signals.
    Process,
    /// Backproject the range profiles and combine images.
    Image,
    /// Coherence and image-quality report.
    Metrics,
    /// Timing, data-rate and bandwidth budgets.
    Budget,
    /// One-shot error sweep for figure 7 (SFO), 8 (CFO), 9 (CPE), 10 (TO)
    /// or 11 (localization).
    Figure { id: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Mono,
    Bistatic,
    Both,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Mono => Mode::Mono,
            ModeArg::Bistatic => Mode::Bistatic,
            ModeArg::Both => Mode::Both,
        }
    }
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Trigger => "trigger",
            Command::Process => "process",
            Command::Image => "image",
            Command::Metrics => "metrics",
            Command::Budget => "budget",
            Command::Figure { .. } => "figure",
        }
    }
}

#[derive(Debug, Serialize)]
struct ErrorRecord<'a> {
    error: &'a str,
    stage: &'a str,
    message: String,
}

/// Error record printed on failure.
pub fn error_record(stage: &str, e: &Error) -> String {
    serde_json::to_string(&ErrorRecord {
        error: e.kind(),
        stage,
        message: e.to_string(),
    })
    .unwrap_or_else(|_| format!("{{\"error\":\"{}\"}}", e.kind()))
}

fn load(cli: &Cli) -> Result<Scenario> {
    let s = match &cli.scenario {
        Some(p) => Scenario::load(p)?,
        None => Scenario::default(),
    };
    Ok(s.with_seed(cli.seed))
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v).map_err(|e| Error::Format(e.to_string()))
}

/// Runs the parsed command and returns the stdout summary.
pub fn execute(cli: &Cli) -> Result<String> {
    let scenario = load(cli)?;
    let mode = cli.mode.map_or(scenario.processing.mode, Mode::from);
    let out = &cli.out;
    let run = || -> Result<String> {
        if let Command::Figure { id } = cli.command {
            pipeline::figure_sweep(id, &scenario.params())?;
            return to_json(&pipeline::run_figure(id, &scenario, mode, out)?);
        }
        let ctx = Context::new(scenario.clone(), mode)?;
        match cli.command {
            Command::Simulate => to_json(&pipeline::simulate_to_dir(&ctx, out)?),
            Command::Process => to_json(&pipeline::process_dir(&ctx, out)?),
            Command::Image => to_json(&pipeline::image_dir(&ctx, out)?),
            Command::Metrics => to_json(&pipeline::metrics_dir(&ctx, out)?.0),
            Command::Budget => to_json(&pipeline::budget_dir(&ctx, out)?.0),
            Command::Trigger => to_json(&pipeline::trigger_dir(&ctx, out)?.0),
            Command::Figure { .. } => unreachable!(),
        }
    };
    match cli.threads {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k.max(1))
            .build()
            .map_err(|e| Error::InvalidParams(e.to_string()))?
            .install(run),
        None => run(),
    }
}

/// Entry point used by the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(summary) => {
            use std::io::Write;
            let mut stdout = std::io::stdout().lock();
            let _ = writeln!(stdout, "{summary}");
            0
        }
        Err(e) => {
            eprintln!("{}", error_record(cli.command.name(), &e));
            1
        }
    }
}
