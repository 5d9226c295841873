//! Drives the binary end to end: config validation and exit codes, two
//! worked examples with outputs known in closed form, the collapse
//! demo's loop report, and the conservation report.

use std::path::{Path, PathBuf};
use std::process::Output;

/// Writes `body` as `<label>.json`, runs the subcommand on it, and
/// returns the process output plus the artifact directory.
fn invoke(dir: &Path, label: &str, cmd: &str, body: &str) -> (Output, PathBuf) {
    let cfg = dir.join(format!("{label}.json"));
    std::fs::write(&cfg, body).unwrap();
    let out = dir.join(label);
    let output = std::process::Command::new(env!("CARGO_BIN_EXE_transcoord"))
        .arg(cmd)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    (output, out)
}

fn stderr_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

/// Data rows of a CSV artifact, header dropped, cells split on commas.
fn csv_rows(out: &Path, name: &str) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(out.join(name)).unwrap();
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn cell(rows: &[Vec<String>], row: usize, col: usize) -> f64 {
    rows[row][col].parse().unwrap()
}

#[test]
fn config_errors_name_the_offending_field() {
    let root = tempfile::tempdir().unwrap();
    // (label, subcommand, config body, fragments the diagnostic must carry)
    let cases: [(&str, &str, &str, [&str; 2]); 4] = [
        (
            "bad_fraction",
            "trace",
            r#"{"schema_version": 1, "command": "trace",
                "params": {"packet": {"kind": "gaussian"},
                           "fractions": [1.5], "t_range": [0.0, 1.0]}}"#,
            ["config error at params.fractions[0]", "strictly between 0 and 1"],
        ),
        (
            "bad_schema",
            "trace",
            r#"{"schema_version": 2, "command": "trace",
                "params": {"packet": {"kind": "gaussian"},
                           "fractions": [0.5], "t_range": [0.0, 1.0]}}"#,
            ["config error at schema_version", "unsupported version 2"],
        ),
        (
            "wrong_command",
            "fraction",
            r#"{"schema_version": 1, "command": "trace",
                "params": {"packet": {"kind": "gaussian"},
                           "fractions": [0.5], "t_range": [0.0, 1.0]}}"#,
            ["config error at command", "file is for 'trace'"],
        ),
        (
            "missing_field",
            "doppler",
            r#"{"schema_version": 1, "command": "doppler",
                "params": {"receiver_beta": 0.6}}"#,
            ["config error at params.emitter_beta", "missing required number"],
        ),
    ];
    for (label, cmd, body, fragments) in cases {
        let (output, _) = invoke(root.path(), label, cmd, body);
        assert_eq!(output.status.code(), Some(2), "{label}: wrong exit status");
        let err = stderr_of(&output);
        for fragment in fragments {
            assert!(err.contains(fragment), "{label}: stderr {err:?} lacks {fragment:?}");
        }
    }
}

#[test]
fn toolkit_errors_exit_one_with_a_stable_name() {
    let root = tempfile::tempdir().unwrap();
    // A plane wave has no total probability to take fractions of; the
    // failure belongs to the toolkit, not the config, so status is 1
    // and the message leads with the error's variant name.
    let (output, _) = invoke(
        root.path(),
        "plane_fraction",
        "fraction",
        r#"{"schema_version": 1, "command": "fraction",
            "params": {"packet": {"kind": "plane", "k": 1.0},
                       "events": [[0.0, 0.0]]}}"#,
    );
    assert_eq!(output.status.code(), Some(1), "wrong exit status");
    let err = stderr_of(&output);
    assert!(err.starts_with("error: NotNormalized"), "stderr was {err:?}");
}

#[test]
fn neighborhood_reproduces_the_boosted_construction() {
    let root = tempfile::tempdir().unwrap();
    let (output, out) = invoke(
        root.path(),
        "boosted",
        "neighborhood",
        r#"{"schema_version": 1, "command": "neighborhood",
            "params": {"center": [0.0, 0.0], "delta": 0.04, "beta": 0.6}}"#,
    );
    assert!(output.status.success(), "{}", stderr_of(&output));
    // With beta = 0.6 the boosted time leg is sqrt(delta) * gamma * (1, beta)
    // = (0.25, 0.15) and the spatial leg swaps the components.
    let rows = csv_rows(&out, "neighborhood.csv");
    let expect = [
        ("center", 0.0, 0.0),
        ("future", 0.25, 0.15),
        ("past", -0.25, -0.15),
        ("spatial_plus", 0.15, 0.25),
        ("spatial_minus", -0.15, -0.25),
    ];
    assert_eq!(rows.len(), expect.len());
    for (row, (role, t, x)) in rows.iter().zip(expect) {
        assert_eq!(row[0], role);
        let (got_t, got_x): (f64, f64) = (row[1].parse().unwrap(), row[2].parse().unwrap());
        assert!(
            (got_t - t).abs() < 1e-12 && (got_x - x).abs() < 1e-12,
            "{role}: got ({got_t}, {got_x}), expected ({t}, {x})"
        );
    }
    let summary = csv_rows(&out, "neighborhood_summary.csv");
    assert!((cell(&summary, 0, 0) - 0.04).abs() < 1e-15);
    assert!(cell(&summary, 0, 1) < 1e-9, "consistency defect too large");
}

#[test]
fn doppler_reports_the_half_ratio() {
    let root = tempfile::tempdir().unwrap();
    let (output, out) = invoke(
        root.path(),
        "recession",
        "doppler",
        r#"{"schema_version": 1, "command": "doppler",
            "params": {"emitter_beta": 0.0, "receiver_beta": 0.6,
                       "direction": "rightward", "omega": 2.0}}"#,
    );
    assert!(output.status.success(), "{}", stderr_of(&output));
    let rows = csv_rows(&out, "doppler.csv");
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][2], "rightward");
    assert!((cell(&rows, 0, 4) - 0.5).abs() < 1e-12, "ratio {}", rows[0][4]);
    assert!((cell(&rows, 0, 5) - 1.0).abs() < 1e-12, "received omega {}", rows[0][5]);
}

#[test]
fn collapse_demo_reports_the_planar_loop() {
    let root = tempfile::tempdir().unwrap();
    // Spacelike trigger pair: |dt| = 0.5 < |dx| = 4.
    let body = |comparator: &str| {
        format!(
            r#"{{"schema_version": 1, "command": "collapse-demo",
                "params": {{"triggers": [[0.0, 0.0], [0.5, 4.0]],
                            "comparator": "{comparator}"}}}}"#
        )
    };
    let (output, out) =
        invoke(root.path(), "planes", "collapse-demo", &body("straddling_planes"));
    assert!(output.status.success(), "{}", stderr_of(&output));
    let rows = csv_rows(&out, "loop_report.csv");
    assert_eq!(rows[0][0], "straddling_planes");
    assert_eq!(rows[0][1], "false", "plane collapse should loop here");
    assert!(!rows[0][2].is_empty(), "loop verdict needs an edge witness");

    let (output, out) = invoke(root.path(), "cones", "collapse-demo", &body("backward_cone"));
    assert!(output.status.success(), "{}", stderr_of(&output));
    let rows = csv_rows(&out, "loop_report.csv");
    assert_eq!(rows[0][1], "true", "cone collapse must stay acyclic");
    assert!(rows[0][2].is_empty());
    let dot = std::fs::read_to_string(out.join("influence.dot")).unwrap();
    assert!(dot.starts_with("digraph"), "dot export is malformed");
    assert!(dot.contains("->"), "influence graph has no edges");
}

#[test]
fn conservation_report_stays_flat() {
    let root = tempfile::tempdir().unwrap();
    let (output, out) = invoke(
        root.path(),
        "quartiles",
        "conservation-report",
        r#"{"schema_version": 1, "command": "conservation-report",
            "params": {"packet": {"kind": "gaussian"},
                       "fractions": [0.25, 0.75], "t_range": [0.0, 1.0],
                       "slices": 11}}"#,
    );
    assert!(output.status.success(), "{}", stderr_of(&output));
    let summary = csv_rows(&out, "conservation_summary.csv");
    assert!((cell(&summary, 0, 2) - 0.5).abs() < 1e-6, "reference fraction off");
    assert!(cell(&summary, 0, 3) < 1e-6, "drift {} too large", summary[0][3]);
    let values = csv_rows(&out, "conservation.csv");
    assert_eq!(values.len(), 11);
    for row in &values {
        let v: f64 = row[1].parse().unwrap();
        assert!((v - 0.5).abs() < 1e-6, "slice at t={} drifted to {v}", row[0]);
    }
}
