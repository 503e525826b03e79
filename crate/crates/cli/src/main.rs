use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use snipesim::harness::{emit_report, list_scenarios, load_scenario, run_scenario, Report};
use snipesim::mempool::PolicyMode;

#[derive(Parser)]
#[command(
    name = "snipesim",
    version,
    about = "Run BRC20 sniping scenarios against a simulated mempool"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

impl Format {
    fn as_str(self) -> &'static str {
        match self {
            Format::Text => "text",
            Format::Json => "json",
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a built-in scenario or a scenario file.
    Run {
        #[arg(long)]
        scenario: String,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the mempool policy (coexist or rbf).
        #[arg(long)]
        policy: Option<PolicyMode>,
        /// Enforce fee locks.
        #[arg(long)]
        fee_lock: bool,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        /// Also write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List built-in scenarios.
    List,
    /// Re-render a saved JSON report.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
}

fn run() -> Result<bool> {
    match Cli::parse().command {
        Command::Run {
            scenario,
            seed,
            policy,
            fee_lock,
            format,
            out,
        } => {
            let mut s = load_scenario(&scenario)?;
            if let Some(seed) = seed {
                s.seed = seed;
            }
            if let Some(mode) = policy {
                s.policy.mode = mode;
            }
            s.policy.fee_lock |= fee_lock;
            let report = run_scenario(s)?;
            print!("{}", emit_report(&report, format.as_str())?);
            if let Some(path) = out {
                std::fs::write(&path, report.to_json())
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            Ok(report.passed)
        }
        Command::List => {
            for name in list_scenarios() {
                println!("{name}");
            }
            Ok(true)
        }
        Command::Report { input, format } => {
            let text = std::fs::read_to_string(&input)
                .with_context(|| format!("reading {}", input.display()))?;
            let report = Report::from_json(&text)?;
            print!("{}", emit_report(&report, format.as_str())?);
            Ok(report.passed)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
