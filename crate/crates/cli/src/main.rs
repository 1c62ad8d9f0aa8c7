//! `gne` — distributed v-GNE seeking from the command line.
//!
//! Subcommands:
//! - `run`: integrate a scenario (single- and/or double-integrator agents),
//!   writing a trajectory CSV and a TOML report per mode. Exit 0 when every
//!   run converged, 2 when one hit the time budget, 1 on errors.
//! - `certify`: evaluate the consensus-gain certificate. Exit 0 when
//!   satisfied, 2 when not.
//! - `analyze`: re-examine a recorded CSV against its report.
//! - `export`: print a scenario as TOML, as a starting point for custom
//!   problem files consumed by `run --scenario <path>`.
//!
//! The default output directory is `$GNE_OUT_DIR` (falling back to `./runs`).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gne_core::scenarios::Mode;

mod csvio;
mod runner;

#[derive(Parser)]
#[command(name = "gne", version, about = "Distributed seeking of variational generalized Nash equilibria")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Integrate a scenario and record trajectory + report artifacts.
    Run(RunArgs),
    /// Evaluate the consensus-gain certificate for a scenario.
    Certify(CertifyArgs),
    /// Check a recorded trajectory CSV against its run report.
    Analyze(AnalyzeArgs),
    /// Print a scenario definition as TOML (editable, re-runnable from file).
    Export(ExportArgs),
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Single,
    Double,
    Both,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Single => Mode::Single,
            ModeArg::Double => Mode::Double,
            ModeArg::Both => Mode::Both,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Built-in scenario name (twoagent-unconstrained, twoagent-coupled,
    /// sensor, random-quadratic) or path to a scenario TOML file.
    #[arg(long)]
    scenario: String,
    /// Which dynamics to run; defaults to the scenario's own setting.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Parameter overrides, repeatable: c, h, t_max, eps_stop, stride plus
    /// seed/n/d/m/mu for the built-in generators.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Run several consensus gains concurrently, e.g. `--sweep c=10,30,60`
    /// (each gain gets its own output subdirectory and re-derived step size).
    #[arg(long)]
    sweep: Option<String>,
    /// Output directory (default: $GNE_OUT_DIR, then ./runs).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CertifyArgs {
    /// Built-in scenario name or path to a scenario TOML file.
    #[arg(long)]
    scenario: String,
    /// Parameter overrides, e.g. c=60 to probe another gain.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Trajectory CSV written by `gne run`.
    #[arg(long)]
    traj: PathBuf,
    /// Report TOML written alongside the trajectory.
    #[arg(long)]
    report: PathBuf,
}

#[derive(Args)]
struct ExportArgs {
    /// Built-in scenario name or path to a scenario TOML file.
    #[arg(long)]
    scenario: String,
    /// Parameter overrides applied before export (same keys as `run`).
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.cmd {
        Cmd::Run(a) => runner::cmd_run(
            &a.scenario,
            a.mode.map(Mode::from),
            &a.overrides,
            a.sweep.as_deref(),
            a.out,
        ),
        Cmd::Certify(a) => runner::cmd_certify(&a.scenario, &a.overrides),
        Cmd::Analyze(a) => runner::cmd_analyze(&a.traj, &a.report),
        Cmd::Export(a) => runner::cmd_export(&a.scenario, &a.overrides),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
