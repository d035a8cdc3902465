//! End-to-end tests of the binary: exit-code contract, schema validity,
//! reproducibility, and config/env plumbing.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_fourfold"));
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn parse_stdout(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is one JSON object")
}

#[test]
fn curvature_euclidean_is_zero_bundle() {
    let out = run(&["curvature", "--metric", "euclidean", "--at", "0,0,0,0"], &[]);
    assert_eq!(out.status.code(), Some(0));
    let v = parse_stdout(&out);
    assert_eq!(v["status"], "ok");
    let p = &v["result"]["points"][0];
    assert_eq!(p["scalar"], 0.0);
    assert_eq!(p["bach_norm"], 0.0);
    assert_eq!(p["ricci_norm"], 0.0);
}

#[test]
fn unknown_metric_is_internal_error() {
    let out = run(&["curvature", "--metric", "moebius"], &[]);
    assert_eq!(out.status.code(), Some(1));
    let v = parse_stdout(&out);
    assert_eq!(v["status"], "error");
    assert_eq!(v["failure"]["kind"], "internal");
}

#[test]
fn construct_flat_base_at_positive_t_exits_two_and_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("radial.csv");
    let out = run(
        &[
            "construct",
            "--metric",
            "euclidean",
            "--t",
            "1",
            "--radius",
            "0.25",
            "--box-resolution",
            "4,4,4,4",
            "--profile-samples",
            "8",
            "--csv",
            csv.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let v = parse_stdout(&out);
    assert_eq!(v["status"], "hypothesis-failed");
    assert_eq!(v["failure"]["kind"], "bach-vanishes");
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("rho,bach_bar,scalar_bar,mixed"));
    assert_eq!(lines.count(), 8);
}

#[test]
fn fixed_seed_output_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for path in [&a, &b] {
        let out = run(
            &[
                "verify",
                "--suite",
                "covariance",
                "--trials",
                "3",
                "--seed",
                "11",
                "--out",
                path.to_str().unwrap(),
            ],
            &[],
        );
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let ba = std::fs::read(&a).unwrap();
    let bb = std::fs::read(&b).unwrap();
    assert_eq!(ba, bb, "same config and seed must produce identical bytes");
}

#[test]
fn envelope_matches_documented_schema() {
    let out = run(&["verify", "--suite", "profile"], &[]);
    assert_eq!(out.status.code(), Some(0));
    let v = parse_stdout(&out);

    let envelope = [
        "schema_version",
        "command",
        "conventions",
        "seed",
        "threads",
        "tolerances",
        "status",
        "failure",
        "result",
    ];
    let obj = v.as_object().unwrap();
    assert_eq!(obj.len(), envelope.len());
    for key in envelope {
        assert!(obj.contains_key(key), "missing envelope key {key}");
    }
    assert_eq!(v["schema_version"], "1.0");
    for key in ["signature", "christoffel", "ricci", "bach", "conformal", "mixed_curvature", "units"]
    {
        assert!(v["conventions"][key].is_string(), "missing convention {key}");
    }
    for key in ["cross", "alg", "aubin", "norm", "bach_floor", "eig", "zero"] {
        assert!(v["tolerances"][key].is_number(), "missing tolerance {key}");
    }

    // The shipped schema document must mention every envelope key, so the
    // two cannot drift apart silently.
    let doc_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/schema.md");
    let doc = std::fs::read_to_string(doc_path).expect("docs/schema.md ships with the workspace");
    assert!(doc.contains("Schema version: **1.0**"));
    for key in envelope {
        assert!(doc.contains(key), "schema doc does not mention {key}");
    }
    for key in ["rho,bach_bar,scalar_bar,mixed", "phi-not-negative", "bach-vanishes"] {
        assert!(doc.contains(key), "schema doc does not mention {key}");
    }
}

#[test]
fn env_and_config_override_tolerances() {
    let out = run(
        &["curvature", "--metric", "sphere", "--points", "2"],
        &[("FOURFOLD_CROSS_TOL", "0.5")],
    );
    assert_eq!(out.status.code(), Some(0));
    let v = parse_stdout(&out);
    assert_eq!(v["tolerances"]["cross"], 0.5);

    // Config file overrides the environment; explicit flags win over both.
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "seed = 3\n[tolerances]\ncross = 1e-4\n").unwrap();
    let out = run(
        &[
            "curvature",
            "--metric",
            "sphere",
            "--points",
            "2",
            "--config",
            cfg.to_str().unwrap(),
        ],
        &[("FOURFOLD_CROSS_TOL", "0.5")],
    );
    assert_eq!(out.status.code(), Some(0));
    let v = parse_stdout(&out);
    assert_eq!(v["tolerances"]["cross"], 1e-4);
    assert_eq!(v["seed"], 3);

    let out = run(
        &[
            "curvature",
            "--metric",
            "sphere",
            "--points",
            "2",
            "--config",
            cfg.to_str().unwrap(),
            "--seed",
            "9",
        ],
        &[],
    );
    let v = parse_stdout(&out);
    assert_eq!(v["seed"], 9);

    // Unknown config keys are a parse error, not a silent ignore.
    std::fs::write(&cfg, "sede = 3\n").unwrap();
    let out = run(
        &["curvature", "--metric", "sphere", "--config", cfg.to_str().unwrap()],
        &[],
    );
    assert_eq!(out.status.code(), Some(1));
}
