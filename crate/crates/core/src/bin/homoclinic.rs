use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use homoclinic::report::{emit_report, run_command, Command, Format, RunOptions};
use homoclinic::scenario::load_scenario;

/// Homoclinic tangency toolkit: contact orders, resonances, C1 decay,
/// transversality scans and horseshoe witnesses.
#[derive(Parser, Debug)]
#[command(name = "homoclinic", version)]
struct Cli {
    /// One of contact-order, resonance, iterate, lambda-verify,
    /// transversality-scan, horseshoe, all.
    command: Command,
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    k_max: Option<u32>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    depth: Option<u32>,
    /// Output directory; defaults to $HOMOCLINIC_OUT_DIR, then the scenario's
    /// own setting, then `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "json")]
    format: Vec<Format>,
    #[arg(long)]
    seed: Option<u64>,
    /// Record wall-clock timings in the report.
    #[arg(long)]
    timings: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let scenario = match load_scenario(&cli.scenario) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let opts = RunOptions {
        k_max: cli.k_max,
        epsilon: cli.epsilon,
        depth: cli.depth,
        seed: cli.seed,
        timings: cli.timings,
    };
    let report = run_command(cli.command, &scenario, opts);
    for v in &report.verdicts {
        println!("{:<20} {:<8} {}", v.module, format!("{:?}", v.status).to_lowercase(), v.detail);
    }
    let dir = cli
        .out
        .or_else(|| std::env::var_os("HOMOCLINIC_OUT_DIR").map(PathBuf::from))
        .or_else(|| scenario.file.outputs.as_ref().and_then(|o| o.dir.clone()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    match emit_report(&report, &cli.format, &dir) {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    ExitCode::from(report.exit_code() as u8)
}
