use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use invsep::cli::{run, Command};
use invsep::config::load_config;

/// Invariant observer and controller checks for the unicycle on SE(2).
#[derive(Debug, Parser)]
#[command(name = "invsep", version)]
struct Args {
    /// What to run.
    #[arg(value_enum)]
    command: Command,

    /// Scenario document (JSON).
    #[arg(long)]
    config: PathBuf,

    /// Directory for report.json and any series files.
    #[arg(long)]
    out: PathBuf,

    /// Override the integration step in seconds.
    #[arg(long)]
    dt: Option<f64>,

    /// Override the simulated horizon in seconds.
    #[arg(long = "t-end")]
    t_end: Option<f64>,

    /// Override the command's main pass threshold.
    #[arg(long)]
    tol: Option<f64>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = load_config(&args.config)
        .and_then(|cfg| cfg.with_overrides(args.dt, args.t_end))
        .and_then(|cfg| run(args.command, &cfg, &args.out, args.tol));
    match result {
        Ok(report) => {
            let verdict = if report.pass { "pass" } else { "FAIL" };
            println!("{}: {verdict}", report.command);
            for (name, value) in &report.metrics {
                println!("  {name} = {value:e}");
            }
            if report.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
