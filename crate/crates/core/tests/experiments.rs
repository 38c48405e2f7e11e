use std::fs;

use maxwell_dirac_lab::error::LabError;
use maxwell_dirac_lab::verify::report::{RECORDS_FILE, SUMMARY_FILE};
use maxwell_dirac_lab::verify::{
    convergence_order, emit_report, read_snapshot, run_experiment, ExperimentConfig, ExperimentKind,
};

fn uniform_decay() -> ExperimentConfig {
    ExperimentConfig::preset(ExperimentKind::UniformDecay)
}

#[test]
fn empty_law_list_is_rejected_before_compute() {
    let mut config = ExperimentConfig::preset(ExperimentKind::DualityEqualSigma);
    config.laws.clear();
    assert!(matches!(run_experiment(&config), Err(LabError::Config(_))));
    let text = "experiment = \"duality_equal_sigma\"\nlaws = []\n";
    assert!(matches!(ExperimentConfig::from_toml_str(text), Err(LabError::Config(_))));
}

#[test]
fn unknown_keys_and_laws_are_rejected() {
    assert!(ExperimentConfig::from_toml_str("experiment = \"uniform_decay\"\nsigma = 1.0\n").is_err());
    assert!(ExperimentConfig::from_toml_str("experiment = \"uniform_decay\"\nlaws = [\"momentum\"]\n").is_err());
    assert!(ExperimentConfig::from_toml_str("experiment = \"nonsense\"\n").is_err());
}

#[test]
fn uniform_decay_matches_exponentials() {
    let report = run_experiment(&uniform_decay()).unwrap();
    assert!(report.passed(), "{:?}", report.failures().collect::<Vec<_>>());
    let err = report.rungs[0].metrics["decay_relative_error"];
    assert!(err <= 1e-10, "{err}");
}

#[test]
fn emitted_stream_has_one_record_per_law_and_rung() {
    let mut config = ExperimentConfig::preset(ExperimentKind::AlgebraicIdentities);
    config.laws = vec!["duality".into(), "dilation".into(), "rotation_xy".into()];
    let report = run_experiment(&config).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = emit_report(&report, dir.path()).unwrap();

    let text = fs::read_to_string(&files.records).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let header: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
    assert!(header["header"].get("created_unix").is_some());
    assert_eq!(lines.len() - 1, config.laws.len() * config.ladder.len());
    for line in &lines[1..] {
        let rec: serde_json::Value = serde_json::from_str(line).unwrap();
        for key in ["experiment", "law", "rung", "h", "dt", "l2_residual", "max_residual", "pass"] {
            assert!(rec.get(key).is_some(), "missing {key} in {line}");
        }
    }
    assert_eq!(files.records, dir.path().join(RECORDS_FILE));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join(SUMMARY_FILE)).unwrap()).unwrap();
    assert_eq!(summary["experiment"], "algebraic_identities");
}

#[test]
fn invariant_csv_has_one_row_per_stored_time() {
    let config = uniform_decay();
    let report = run_experiment(&config).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = emit_report(&report, dir.path()).unwrap();
    let csv = fs::read_to_string(files.invariants).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("law,rung,t,value"));
    let steps = report.rungs[0].steps;
    assert_eq!(lines.count(), steps + 1);
}

#[test]
fn snapshots_round_trip_through_disk() {
    let mut config = uniform_decay();
    config.snapshots = true;
    let report = run_experiment(&config).unwrap();
    assert!(!report.snapshots.is_empty());
    let dir = tempfile::tempdir().unwrap();
    let files = emit_report(&report, dir.path()).unwrap();
    assert_eq!(files.snapshots.len(), report.snapshots.len());
    for (path, snap) in files.snapshots.iter().zip(&report.snapshots) {
        assert_eq!(&read_snapshot(path).unwrap(), snap);
    }
}

#[test]
fn record_streams_are_bitwise_reproducible() {
    let config = ExperimentConfig::preset(ExperimentKind::AlgebraicIdentities);
    let a = run_experiment(&config).unwrap().record_stream().unwrap();
    let b = run_experiment(&config).unwrap().record_stream().unwrap();
    assert_eq!(a.as_bytes(), b.as_bytes());

    let mut other = config.clone();
    other.seed += 1;
    let c = run_experiment(&other).unwrap().record_stream().unwrap();
    assert_ne!(a, c);
}

#[test]
fn convergence_order_examples() {
    let hs = [0.4, 0.2, 0.1];
    let quad = convergence_order(&hs.map(|h| (h, 3.0 * h * h))).unwrap();
    assert!((quad.aggregate.unwrap() - 2.0).abs() < 1e-12);
    let quart = convergence_order(&hs.map(|h| (h, 0.5 * h.powi(4)))).unwrap();
    assert!((quart.aggregate.unwrap() - 4.0).abs() < 1e-12);
    let floor = convergence_order(&hs.map(|h| (h, 1e-9))).unwrap();
    assert!(floor.aggregate.unwrap().abs() < 1e-12);
    assert!(floor.floor_limited);
    let broken = convergence_order(&[(0.4, 1.0), (0.2, 0.0), (0.1, 0.1)]).unwrap();
    assert!(broken.undefined_pairs);
    assert!(broken.pairwise.iter().any(Option::is_none));
}
