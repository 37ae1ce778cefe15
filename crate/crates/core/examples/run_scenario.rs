//! Runs every module on a gallery scenario and writes the reports, as the
//! command-line tool does.
//!
//! ```text
//! cargo run --example run_scenario -- g4_jordan_3d out
//! ```

use std::path::PathBuf;

use homoclinic::gallery;
use homoclinic::report::{emit_report, run_command, Command, Format, RunOptions};

fn main() {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "g1_cubic_2d".into());
    let out = PathBuf::from(args.next().unwrap_or_else(|| "out".into()));

    let Some(loaded) = gallery::load(&name) else {
        eprintln!("no gallery scenario {name}; have {:?}", gallery::names().collect::<Vec<_>>());
        std::process::exit(1);
    };
    let sc = loaded.expect("gallery scenarios are valid");
    let report = run_command(Command::All, &sc, RunOptions::default());
    for v in &report.verdicts {
        println!("{:<20} {:?}  {}", v.module, v.status, v.detail);
    }
    let written = emit_report(&report, &[Format::Json, Format::Csv, Format::Plot], &out).unwrap();
    println!("wrote {} files to {}", written.len(), out.display());
    std::process::exit(report.exit_code());
}
