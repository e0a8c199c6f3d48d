//! Golden-file checks for the report serializers. Set `BLESS=1` to regenerate.

use std::fs;
use std::path::PathBuf;

use bellcav_core::orchestrator::{emit_report, parse_report, run_experiment, ExperimentConfig, ReportFormat};

fn fixture_config() -> ExperimentConfig {
    ExperimentConfig::from_toml_str(
        r#"
master_seed = 20240611
trials = 400
noise = 0.1

[causality]
mode = "relaxed"

[causality.layout]
half_separation = 10.0
quantum_window = 1e-8
protocol_window = 1.0
"#,
    )
    .unwrap()
}

fn check_golden(name: &str, actual: &str) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name);
    if std::env::var_os("BLESS").is_some() {
        fs::write(&path, actual).unwrap();
        return;
    }
    let expected = fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e} (run with BLESS=1)", path.display()));
    assert!(
        expected == actual,
        "{name} differs from golden file; rerun with BLESS=1 if intended\n{actual}"
    );
}

#[test]
fn report_matches_golden_files() {
    let out = run_experiment(&fixture_config()).unwrap();
    check_golden(
        "report.json",
        &emit_report(&out.report, ReportFormat::Structured).unwrap(),
    );
    check_golden("report.txt", &emit_report(&out.report, ReportFormat::Text).unwrap());
}

#[test]
fn structured_report_round_trips() {
    let out = run_experiment(&fixture_config()).unwrap();
    let text = emit_report(&out.report, ReportFormat::Structured).unwrap();
    let back = parse_report(&text).unwrap();
    assert_eq!(back, out.report);
    assert_eq!(emit_report(&back, ReportFormat::Structured).unwrap(), text);
}
