use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use hybrid_fsi::run::{run, RunOptions};
use hybrid_fsi::scenario::{builtin_scenario, ScenarioConfig};
use hybrid_fsi::verify::{run_suite, Suite};

/// Monolithic hybrid Eulerian-ALE fluid-structure interaction solver.
#[derive(Parser)]
#[command(name = "hybrid-fsi", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and write series, snapshots, line cuts and checkpoints.
    Run {
        /// Scenario TOML file.
        #[arg(long)]
        config: PathBuf,
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
        /// Stop after this many steps.
        #[arg(long)]
        max_steps: Option<usize>,
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        restart: Option<PathBuf>,
    },
    /// Write a built-in scenario as TOML ("NAME" or "NAME:desk").
    Scenario {
        #[arg(long)]
        name: String,
        /// Target file, or "-" for standard output.
        #[arg(long)]
        emit: PathBuf,
    },
    /// Run a verification suite and print one line per check.
    Verify {
        #[arg(long, value_enum)]
        suite: SuiteArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Geometry,
    Fluid,
    Solid,
    Coupling,
    Monolithic,
}

impl From<SuiteArg> for Suite {
    fn from(s: SuiteArg) -> Suite {
        match s {
            SuiteArg::Geometry => Suite::Geometry,
            SuiteArg::Fluid => Suite::Fluid,
            SuiteArg::Solid => Suite::Solid,
            SuiteArg::Coupling => Suite::Coupling,
            SuiteArg::Monolithic => Suite::Monolithic,
        }
    }
}

fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run {
            config,
            out,
            max_steps,
            restart,
        } => {
            let cfg = ScenarioConfig::load(&config)
                .with_context(|| format!("reading {}", config.display()))?;
            let report = run(&cfg, &out, &RunOptions { max_steps, restart })
                .with_context(|| format!("running {}", cfg.name))?;
            println!(
                "{}: {} at step {} (t = {})",
                cfg.name, report.manifest.status, report.manifest.steps, report.manifest.final_time
            );
            Ok(true)
        }
        Command::Scenario { name, emit } => {
            let text = builtin_scenario(&name)?.to_toml()?;
            if emit.as_os_str() == "-" {
                print!("{text}");
            } else {
                std::fs::write(&emit, text)
                    .with_context(|| format!("writing {}", emit.display()))?;
            }
            Ok(true)
        }
        Command::Verify { suite } => {
            let report = run_suite(suite.into())?;
            print!("{}", report.render());
            Ok(report.passed())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
