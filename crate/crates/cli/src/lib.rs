//! Command-line front end for `repeater-core`.
//!
//! Tables go to `--out` (or stdout) as CSV or JSON. `rate` and `check` also
//! print a human-readable report.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use clap::{CommandFactory, Parser, Subcommand};

use repeater_core::checks::DejmpsMapFn;
use repeater_core::distill::dejmps_map;

use crate::commands::{OPTIMIZE_X_GA, SWEEP_X_GA};
use crate::config::{resolve, CommonArgs, RunConfig};
pub use crate::error::CliError;
use crate::output::{emit, render};

#[derive(Debug, Parser)]
#[command(name = "repeater", version, about = "Secret-key rates of double-heralded repeater chains")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Key rate of one chain with its error-factor breakdown (needs --n and --l0)
    Rate(CommonArgs),
    /// Key rate over distances, L0 values and gate factors, with and without distillation
    Sweep(CommonArgs),
    /// Best L0 per distance and gate factor, with and without distillation
    Optimize(CommonArgs),
    /// Qubit pairs needed to keep the connection probability at each post-selection fraction
    Inset(CommonArgs),
    /// Distillation breakpoints n_L and n_S
    DistillSchedule(CommonArgs),
    /// Seeded Monte Carlo of the section completion times
    Simulate(CommonArgs),
    /// Analytic-vs-oracle checks; exit code 1 if any fails
    Check(CommonArgs),
}

impl Command {
    fn name_and_args(&self) -> (&'static str, &CommonArgs) {
        match self {
            Command::Rate(a) => ("rate", a),
            Command::Sweep(a) => ("sweep", a),
            Command::Optimize(a) => ("optimize", a),
            Command::Inset(a) => ("inset", a),
            Command::DistillSchedule(a) => ("distill-schedule", a),
            Command::Simulate(a) => ("simulate", a),
            Command::Check(a) => ("check", a),
        }
    }
}

fn usage_of(sub: &str) -> String {
    let mut cmd = Cli::command();
    cmd.build();
    let mut usage = match cmd.find_subcommand_mut(sub) {
        Some(s) => s.render_usage().to_string(),
        None => cmd.render_usage().to_string(),
    };
    usage.push_str("\n\nFor more information, try '--help'.");
    usage
}

/// What a finished command produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    /// Written to stdout.
    pub stdout: Vec<u8>,
    pub exit_code: i32,
}

/// Runs `cmd`. Tables destined for `--out` are written there; everything
/// meant for the terminal is returned.
pub fn run(cmd: &Command) -> Result<Outcome, CliError> {
    run_with_map(cmd, dejmps_map)
}

/// [`run`] with a substitute distillation map for `check`.
pub fn run_with_map(cmd: &Command, map: DejmpsMapFn) -> Result<Outcome, CliError> {
    let (name, args) = cmd.name_and_args();
    let settings = resolve(args)?;
    if name == "rate" {
        for (flag, missing) in [("--n", settings.n.is_none()), ("--l0", settings.l0.is_none())] {
            if missing {
                return Err(CliError::Usage {
                    message: format!("`rate` requires {flag} (as a flag or config key)"),
                    usage: usage_of(name),
                });
            }
        }
    }
    let x_ga_default: &[f64] = match name {
        "optimize" => &OPTIMIZE_X_GA,
        _ => &SWEEP_X_GA,
    };
    let cfg = RunConfig::from_settings(settings, x_ga_default)?;

    let table = |bytes: Vec<u8>| -> Result<Outcome, CliError> {
        match &cfg.out {
            Some(path) => {
                emit(&bytes, Some(path))?;
                Ok(Outcome { stdout: Vec::new(), exit_code: 0 })
            }
            None => Ok(Outcome { stdout: bytes, exit_code: 0 }),
        }
    };

    match cmd {
        Command::Rate(_) => {
            let out = commands::cmd_rate(&cfg)?;
            if let Some(path) = &cfg.out {
                emit(&render(&[out.row], cfg.format)?, Some(path))?;
            }
            Ok(Outcome {
                stdout: out.report.into_bytes(),
                exit_code: 0,
            })
        }
        Command::Sweep(_) => table(render(&commands::cmd_sweep(&cfg)?, cfg.format)?),
        Command::Optimize(_) => table(render(&commands::cmd_optimize(&cfg)?, cfg.format)?),
        Command::Inset(_) => table(render(&commands::cmd_inset(&cfg)?, cfg.format)?),
        Command::DistillSchedule(_) => table(render(&commands::cmd_distill_schedule(&cfg)?, cfg.format)?),
        Command::Simulate(_) => table(render(&commands::cmd_simulate(&cfg)?, cfg.format)?),
        Command::Check(_) => {
            let report = commands::cmd_check(&cfg, map)?;
            let text = format!("{report}\n").into_bytes();
            let exit_code = if report.passed() { 0 } else { 1 };
            if let Some(path) = &cfg.out {
                emit(&text, Some(path))?;
            }
            Ok(Outcome { stdout: text, exit_code })
        }
    }
}
