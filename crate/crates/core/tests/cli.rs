// SPDX-License-Identifier: Apache-2.0
use cloaksim::cli::output::{csv_body, sha256_hex};
use cloaksim::cli::scenario::Scenario;
use cloaksim::cli::{BUNDLED, EXIT_CONFIG, EXIT_OK};
use std::path::Path;
use std::process::{Command, Output};

fn cloaksim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cloaksim")).args(args).env_remove("CLOAKSIM_OUT").output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn data(csv: &str) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut lines = csv.lines().filter(|l| !l.starts_with('#'));
    let head = lines.next().unwrap().split(',').map(str::to_string).collect();
    let rows = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    (head, rows)
}

#[test]
fn list_shows_bundled_scenarios() {
    let o = cloaksim(&["list"]);
    assert_eq!(code(&o), EXIT_OK);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(BUNDLED.len() >= 12);
    for (name, _) in BUNDLED {
        assert!(text.lines().any(|l| l.split_whitespace().next() == Some(name)), "{name}");
    }
    assert!(!text.contains("invalid"));
}

#[test]
fn bundled_scenarios_round_trip() {
    for (name, text) in BUNDLED {
        let a = Scenario::parse(text).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(&a.name, name);
        assert!(!a.paper_ref.trim().is_empty(), "{name}");
        let b = Scenario::parse(&a.to_json()).unwrap();
        assert_eq!(a.to_json(), b.to_json(), "{name}");
        assert_eq!(a.hash(), b.hash());
        a.system_spec().unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn fig2a_columns_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = cloaksim(&["run", "fig2a", "--set", "horizon_ns=2", "--set", "n_times=21", "--out", out, "--threads", "1"]);
    assert_eq!(code(&o), EXIT_OK, "{}", String::from_utf8_lossy(&o.stderr));
    let run = dir.path().join("fig2a");
    let csv = std::fs::read_to_string(run.join("fig2a.csv")).unwrap();
    let (head, rows) = data(&csv);
    assert_eq!(head, ["t_ns", "P_e_undriven", "P_e_cloaked", "n_cavity", "|alpha|^2", "n_undriven"]);
    assert_eq!(rows.len(), 21);
    assert!(csv.lines().any(|l| l.starts_with("# scenario_sha256: ")));
    for r in &rows {
        assert!((r[1] - r[2]).abs() < 1e-6);
        assert!((r[3] - r[4] - r[5]).abs() < 1e-3);
    }

    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["scenario"], "fig2a");
    assert_eq!(m["protocol"], "vacuum_rabi");
    let files = m["files"].as_array().unwrap();
    assert!(files.iter().any(|f| f["path"] == "fig2a.csv"));
    for f in files {
        let p = run.join(f["path"].as_str().unwrap());
        assert_eq!(sha256_hex(&std::fs::read(p).unwrap()), f["sha256"].as_str().unwrap());
    }
    let stored = Scenario::parse(&std::fs::read_to_string(run.join("scenario.json")).unwrap()).unwrap();
    assert_eq!(stored.hash(), m["scenario_sha256"].as_str().unwrap());
}

#[test]
fn zero_drive_override_gives_zero_rows() {
    let dir = tempfile::tempdir().unwrap();
    let o = cloaksim(&["run", "fig3b", "--set", "eps1_MHz=0", "--set", "levels=3", "--set", "cavity_dim=4", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), EXIT_OK, "{}", String::from_utf8_lossy(&o.stderr));
    let (head, rows) = data(&std::fs::read_to_string(dir.path().join("fig3b/fig3b.csv")).unwrap());
    assert_eq!(rows.len(), 1);
    for name in ["delta_omega_MHz", "delta_Gamma_MHz", "delta_omega_cancel_MHz", "delta_Gamma_cancel_MHz"] {
        let k = head.iter().position(|h| h == name).unwrap();
        assert_eq!(rows[0][k], 0.0, "{name}");
    }
}

#[test]
fn config_errors_exit_two_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    let text = BUNDLED[0].1.replace("\"omega_r_GHz\"", "\"omega_r_Ghz\"");
    std::fs::write(&bad, text).unwrap();
    let out = dir.path().join("out");
    let o = cloaksim(&["run", bad.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), EXIT_CONFIG);
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("omega_r_Ghz") && err.contains("omega_r_GHz"), "{err}");
    assert!(!out.exists());

    let o = cloaksim(&["run", "fig2a", "--set", "no_such_key=1", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), EXIT_CONFIG);
    let o = cloaksim(&["run", "fig3b", "--set", "omega1_GHz=x", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), EXIT_CONFIG);
    let o = cloaksim(&["run", "missing.json"]);
    assert_eq!(code(&o), EXIT_CONFIG);
    let o = cloaksim(&["frobnicate"]);
    assert_eq!(code(&o), EXIT_CONFIG);
    assert!(!out.exists());
}

fn tone(set: &[&str], out: &Path) -> Vec<Vec<f64>> {
    let mut args = vec!["export-tone", "selftest_tone", "--rate", "20", "--out", out.to_str().unwrap()];
    for s in set {
        args.extend(["--set", s]);
    }
    let o = cloaksim(&args);
    assert_eq!(code(&o), EXIT_OK, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out.join("selftest_tone_tone.csv")).unwrap();
    assert!(text.contains("# strategy: "));
    let (head, rows) = data(&text);
    assert_eq!(head, ["t_ns", "E2_over_2pi_MHz"]);
    rows
}

#[test]
fn export_tone_oracles() {
    let dir = tempfile::tempdir().unwrap();
    let exact = tone(&["strategy=exact"], &dir.path().join("a"));
    let closed = tone(&["strategy=closed_form"], &dir.path().join("b"));
    let zero = tone(&["eps1_MHz=0"], &dir.path().join("c"));
    assert_eq!(exact.len(), closed.len());
    assert!((exact[1][0] - exact[0][0] - 0.05).abs() < 1e-12);
    assert_eq!(exact[0][1], 0.0);
    assert_eq!(closed[0][1], 0.0);
    let peak = closed.iter().map(|r| r[1].abs()).fold(0.0, f64::max);
    assert!(peak > 0.0);
    let diff = exact.iter().zip(&closed).map(|(a, b)| (a[1] - b[1]).abs()).fold(0.0, f64::max);
    assert!(diff < 1e-6 * peak, "{diff} vs peak {peak}");
    assert!(zero.iter().all(|r| r[1] == 0.0));
}

#[test]
fn rerun_gives_identical_csv_bodies() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = cloaksim(&["run", "readout_stats", "--set", "n_shots=20000", "--out", d.path().to_str().unwrap()]);
        assert_eq!(code(&o), EXIT_OK);
    }
    let ra = a.path().join("readout_stats/readout_stats.csv");
    let rb = b.path().join("readout_stats/readout_stats.csv");
    let (ta, tb) = (std::fs::read_to_string(ra).unwrap(), std::fs::read_to_string(rb).unwrap());
    assert!(!csv_body(&ta).is_empty());
    assert_eq!(csv_body(&ta), csv_body(&tb));
    assert_eq!(ta, tb);

    let c = tempfile::tempdir().unwrap();
    let o = cloaksim(&["run", "readout_stats", "--set", "n_shots=20000", "--set", "seed=7", "--out", c.path().to_str().unwrap()]);
    assert_eq!(code(&o), EXIT_OK);
    let tc = std::fs::read_to_string(c.path().join("readout_stats/readout_stats.csv")).unwrap();
    assert_ne!(csv_body(&ta), csv_body(&tc));
}

#[test]
fn output_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_cloaksim")).args(["run", "selftest_tone"]).env("CLOAKSIM_OUT", dir.path()).output().unwrap();
    assert_eq!(code(&o), EXIT_OK);
    assert!(dir.path().join("selftest_tone/manifest.json").exists());
}
