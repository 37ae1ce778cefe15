//! Scenario loading, report emission and the command-line tool end to end.

use std::path::Path;
use std::process::Command as Process;

use homoclinic::gallery;
use homoclinic::report::{
    csv_tables, emit_report, run_command, to_json, Command, Format, Report, RunOptions, Status,
};
use homoclinic::scenario::{load_scenario, parse_scenario, ScenarioError};

const BIN: &str = env!("CARGO_BIN_EXE_homoclinic");

fn gallery_file(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("gallery")
        .join(format!("{name}.toml"))
}

fn run(cmd: Command, name: &str) -> Report {
    let sc = gallery::load(name).unwrap().unwrap();
    run_command(cmd, &sc, RunOptions::default())
}

#[test]
fn loads_gallery_file_from_disk() {
    let sc = load_scenario(&gallery_file("g1_cubic_2d")).unwrap();
    assert_eq!(sc.name(), "g1_cubic_2d");
    assert_eq!(sc.map.as_ref().unwrap().alpha(), 0.5);
    assert_eq!(sc.contact.len(), 2);
}

#[test]
fn missing_file_is_an_io_error() {
    let err = load_scenario(Path::new("/nonexistent/scenario.toml")).unwrap_err();
    assert!(matches!(err, ScenarioError::Io { .. }), "{err}");
}

#[test]
fn out_of_range_alpha_is_a_schema_error() {
    let src = gallery::source("g1_cubic_2d").unwrap().replace("alpha = 0.5", "alpha = 1.5");
    match parse_scenario(&src) {
        Err(ScenarioError::Schema { field, .. }) => assert_eq!(field, "alpha"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn misspelled_key_is_a_schema_error() {
    let src = gallery::source("g1_cubic_2d").unwrap().replacen("\nbetas =", "\nbetaz =", 1);
    match parse_scenario(&src) {
        Err(ScenarioError::Schema { field, constraint }) => {
            assert_eq!(field, "betaz");
            assert!(constraint.contains("unknown key"), "{constraint}");
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn syntax_error_reports_position() {
    let src = "schema_version = 1\nname = \"x\"\n[map\nalpha = 0.5\n";
    match parse_scenario(src) {
        Err(ScenarioError::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }
}

#[test]
fn report_json_round_trips() {
    for (cmd, name) in [
        (Command::TransversalityScan, "g1_cubic_2d"),
        (Command::LambdaVerify, "g5_lambda_perturbed"),
        (Command::All, "g4_jordan_3d"),
    ] {
        let r = run(cmd, name);
        let text = to_json(&r).unwrap();
        let back: Report = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r, "{cmd} {name}");
    }
}

#[test]
fn g1_scan_has_one_transverse_row_per_k() {
    let r = run(Command::TransversalityScan, "g1_cubic_2d");
    let t = r.transversality.as_ref().unwrap();
    assert_eq!(t.rows.len(), 40);
    assert!(t.rows.iter().all(|row| row.transverse));
    assert_eq!(r.exit_code(), 0);
}

#[test]
fn csv_and_plot_files_match_report() {
    let dir = tempfile::tempdir().unwrap();
    let r = run(Command::TransversalityScan, "g2_quintic_2d");
    let paths = emit_report(&r, &[Format::Json, Format::Csv, Format::Plot], dir.path()).unwrap();
    let rows = r.transversality.as_ref().unwrap().rows.len();

    let csv_path = dir.path().join("g2_quintic_2d_transversality-scan_transversality.csv");
    assert!(paths.contains(&csv_path));
    let mut reader = csv::Reader::from_path(&csv_path).unwrap();
    assert_eq!(reader.records().count(), rows);

    let dat = std::fs::read_to_string(dir.path().join("g2_quintic_2d_transversality-scan_transversality_dk.dat")).unwrap();
    assert_eq!(dat.lines().filter(|l| !l.starts_with('#')).count(), rows);

    let r = run(Command::LambdaVerify, "g5_lambda_perturbed");
    emit_report(&r, &[Format::Plot], dir.path()).unwrap();
    let dat = std::fs::read_to_string(dir.path().join("g5_lambda_perturbed_lambda-verify_lambda_decay.dat")).unwrap();
    let n_max = r.scenario.settings.n_max as usize;
    assert_eq!(dat.lines().filter(|l| !l.starts_with('#')).count(), n_max);
}

#[test]
fn csv_tables_have_uniform_width() {
    let r = run(Command::All, "g1_cubic_2d");
    for (name, header, rows) in csv_tables(&r) {
        assert!(rows.iter().all(|row| row.len() == header.len()), "{name}");
    }
}

#[test]
fn horseshoe_exists_for_transverse_gallery_scenarios() {
    for name in ["g1_cubic_2d", "g2_quintic_2d", "g3_diagonal_3d", "g4_jordan_3d"] {
        let r = run(Command::Horseshoe, name);
        let h = r.horseshoe.as_ref().unwrap();
        assert!(h.prefix_closed, "{name}");
        assert!(h.fractions.iter().all(|f| *f == 1.0), "{name}: {:?}", h.fractions);
        assert_eq!(r.verdicts[0].status, Status::Positive, "{name}");
    }
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let status = |args: &[&str]| {
        Process::new(BIN)
            .args(args)
            .arg("--out")
            .arg(dir.path())
            .output()
            .unwrap()
            .status
            .code()
    };
    let g1 = gallery_file("g1_cubic_2d");
    let g6 = gallery_file("g6_one_sided");
    assert_eq!(status(&["transversality-scan", "--scenario", g1.to_str().unwrap()]), Some(0));
    assert_eq!(status(&["transversality-scan", "--scenario", g6.to_str().unwrap()]), Some(2));
    assert_eq!(status(&["all", "--scenario", "/nonexistent.toml"]), Some(1));
}

#[test]
fn cli_honours_output_dir_variable() {
    let dir = tempfile::tempdir().unwrap();
    let out = Process::new(BIN)
        .args(["resonance", "--scenario"])
        .arg(gallery_file("g1_cubic_2d"))
        .args(["--format", "json,csv"])
        .env("HOMOCLINIC_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("g1_cubic_2d_resonance.json").exists());
    assert!(dir.path().join("g1_cubic_2d_resonance_resonance.csv").exists());
}
