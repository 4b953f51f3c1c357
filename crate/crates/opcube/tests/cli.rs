//! End-to-end checks of the command line interface.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_opcube"))
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("opcube-cli-tests");
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

const SMALL_CONFIG: &str = r#"{
  "scenarios": [
    {
      "id": "square-sharp",
      "theorem": "T11a",
      "operad": {"name": "com", "cap": 2, "arity0": false},
      "w": 2,
      "family": "cellular",
      "base": [],
      "cells": [
        {"kind": "free", "degree": 2, "stage": [1]},
        {"kind": "free", "degree": 3, "stage": [2]}
      ],
      "window": [-1, 5],
      "seed": 7
    },
    {
      "id": "square-dual",
      "theorem": "T17",
      "operad": {"name": "com", "cap": 2, "arity0": false},
      "w": 2,
      "family": "cellular",
      "base": [],
      "cells": [
        {"kind": "free", "degree": 2, "stage": [1]},
        {"kind": "free", "degree": 3, "stage": [2]},
        {"kind": "free", "degree": 5, "stage": [1, 2]}
      ],
      "window": [-1, 5],
      "seed": 9
    }
  ]
}"#;

#[test]
fn check_is_deterministic_across_runs() {
    let cfg = tmp("suite.json");
    std::fs::write(&cfg, SMALL_CONFIG).unwrap();
    let out1 = tmp("report1.json");
    let out2 = tmp("report2.json");
    for (out, jobs) in [(&out1, "1"), (&out2, "2")] {
        let status = bin()
            .args(["check", "--config"])
            .arg(&cfg)
            .args(["--jobs", jobs, "--seed", "42", "--out"])
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    }
    let mut v1: serde_json::Value =
        serde_json::from_slice(&std::fs::read(&out1).unwrap()).unwrap();
    let mut v2: serde_json::Value =
        serde_json::from_slice(&std::fs::read(&out2).unwrap()).unwrap();
    for v in [&mut v1, &mut v2] {
        for s in v["scenarios"].as_array_mut().unwrap() {
            s["millis"] = 0.into();
        }
    }
    assert_eq!(v1, v2, "reports differ beyond timings");
    // Verdicts present and passing.
    assert_eq!(v1["scenarios"].as_array().unwrap().len(), 2);
    for s in v1["scenarios"].as_array().unwrap() {
        assert_eq!(s["pass"], serde_json::Value::Bool(true));
    }
}

#[test]
fn homology_command_reads_complex_json() {
    let input = tmp("complex.json");
    std::fs::write(
        &input,
        r#"{"dims": {"0": 2, "1": 1}, "d": {"1": [["1/1"], ["0/1"]]}}"#,
    )
    .unwrap();
    let out = bin().args(["homology", "--input"]).arg(&input).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("H_0 = Q^1"), "{text}");
    assert!(text.contains("connectivity: -1"), "{text}");
}

#[test]
fn demo_commands_run() {
    for which in ["excision", "blakers-massey", "dual"] {
        let out = bin().args(["demo", which]).output().unwrap();
        assert!(out.status.success(), "{which}");
        let text = String::from_utf8(out.stdout).unwrap();
        assert!(text.contains("verdict: pass"), "{which}: {text}");
    }
}

#[test]
fn malformed_config_reports_location() {
    let cfg = tmp("broken.json");
    std::fs::write(&cfg, "{ not json").unwrap();
    let out = bin().args(["check", "--config"]).arg(&cfg).output().unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("parse error at line"), "{err}");
}

#[test]
fn corrupted_operad_bundle_fails_at_load() {
    // A bundle whose binary composition has the wrong sign: loading must
    // fail with the violated identity, before any scenario runs.
    let op = opcube::operad::builtin(opcube::operad::Builtin::Com, 2, false);
    let mut bundle = opcube::json::operad_to_bundle(&op);
    for g in bundle.gamma.iter_mut() {
        if g.t == 2 && g.rs == vec![1, 1] {
            g.map.insert("0".into(), vec![vec!["-1".into()]]);
        }
    }
    let config = serde_json::json!({
        "scenarios": [{
            "id": "bad-operad",
            "theorem": "T11a",
            "operad": {"bundle": bundle},
            "w": 2,
            "family": "cellular",
            "base": [],
            "cells": [
                {"kind": "free", "degree": 2, "stage": [1]},
                {"kind": "free", "degree": 3, "stage": [2]}
            ],
            "seed": 1
        }]
    });
    let cfg = tmp("corrupt.json");
    std::fs::write(&cfg, serde_json::to_string(&config).unwrap()).unwrap();
    let out = bin().args(["check", "--config"]).arg(&cfg).output().unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("operad axiom"), "{err}");
}

#[test]
fn default_suite_runs_from_the_cli() {
    let out_path = tmp("default_report.json");
    let out = bin()
        .args(["check", "--jobs", "4", "--out"])
        .arg(&out_path)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&out_path).unwrap()).unwrap();
    assert!(v["scenarios"].as_array().unwrap().len() >= 50);
}
