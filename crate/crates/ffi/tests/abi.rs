// SPDX-License-Identifier: Apache-2.0
use cloaksim_ffi::*;
use std::ffi::{CStr, CString};
use std::ptr;

fn last_error() -> String {
    let p = cloaksim_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn bundled(name: &str) -> *mut CloaksimScenario {
    let n = CString::new(name).unwrap();
    let mut sc = ptr::null_mut();
    assert_eq!(unsafe { cloaksim_scenario_bundled(n.as_ptr(), &mut sc) }, CLOAKSIM_OK);
    sc
}

#[test]
fn version_is_set() {
    let v = unsafe { CStr::from_ptr(cloaksim_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn run_selftest_through_handles() {
    let sc = bundled("selftest_cloaking_tls");
    let kv = CString::new("t_end_ns=2").unwrap();
    assert_eq!(unsafe { cloaksim_scenario_set(sc, kv.as_ptr()) }, CLOAKSIM_OK);
    let mut res = ptr::null_mut();
    assert_eq!(unsafe { cloaksim_run(sc, &mut res) }, CLOAKSIM_OK);
    let summary: serde_json::Value = serde_json::from_str(unsafe { CStr::from_ptr(cloaksim_result_summary(res)) }.to_str().unwrap()).unwrap();
    assert!(summary["max_trace_distance"].as_f64().unwrap() < 1e-6);
    assert_eq!(unsafe { cloaksim_result_table_count(res) }, 1);
    let csv = unsafe { CStr::from_ptr(cloaksim_result_table_csv(res, 0)) }.to_str().unwrap();
    assert!(csv.starts_with("# scenario: selftest_cloaking_tls"));
    assert!(csv.contains("t_ns,trace_distance"));
    assert!(unsafe { cloaksim_result_table_csv(res, 1) }.is_null());
    unsafe {
        cloaksim_result_free(res);
        cloaksim_scenario_free(sc);
    }
}

#[test]
fn config_errors_set_last_error() {
    let bad = CString::new(r#"{"name":"x","paper_ref":"r","system":{"model":"tls_rwa","omega_q_Ghz":5}}"#).unwrap();
    let mut sc = ptr::null_mut();
    assert_eq!(unsafe { cloaksim_scenario_parse(bad.as_ptr(), &mut sc) }, CLOAKSIM_ERR_CONFIG);
    assert!(sc.is_null());
    assert!(last_error().contains("omega_q_Ghz"));

    let n = CString::new("nope").unwrap();
    assert_eq!(unsafe { cloaksim_scenario_bundled(n.as_ptr(), &mut sc) }, CLOAKSIM_ERR_CONFIG);

    let sc = bundled("fig3b");
    let kv = CString::new("no_such_key=1").unwrap();
    assert_eq!(unsafe { cloaksim_scenario_set(sc, kv.as_ptr()) }, CLOAKSIM_ERR_CONFIG);
    unsafe { cloaksim_scenario_free(sc) };
}

#[test]
fn null_arguments_rejected() {
    let mut sc = ptr::null_mut();
    assert_eq!(unsafe { cloaksim_scenario_parse(ptr::null(), &mut sc) }, CLOAKSIM_ERR_ARGUMENT);
    assert!(last_error().contains("null"));
    let mut res = ptr::null_mut();
    assert_eq!(unsafe { cloaksim_run(ptr::null(), &mut res) }, CLOAKSIM_ERR_ARGUMENT);
    assert!(unsafe { cloaksim_result_summary(ptr::null()) }.is_null());
    assert_eq!(unsafe { cloaksim_result_table_count(ptr::null()) }, 0);
    unsafe {
        cloaksim_scenario_free(ptr::null_mut());
        cloaksim_result_free(ptr::null_mut());
        cloaksim_string_free(ptr::null_mut());
    }
}

#[test]
fn export_tone_starts_at_zero() {
    let sc = bundled("selftest_tone");
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { cloaksim_export_tone(sc, 10.0, &mut out) }, CLOAKSIM_OK);
    let text = unsafe { CStr::from_ptr(out) }.to_str().unwrap().to_string();
    unsafe {
        cloaksim_string_free(out);
        cloaksim_scenario_free(sc);
    }
    let first = text.lines().filter(|l| !l.starts_with('#')).nth(1).unwrap();
    let v: f64 = first.split(',').nth(1).unwrap().parse().unwrap();
    assert_eq!(v, 0.0);
}

#[test]
fn closed_form_tone_samples() {
    let t: Vec<f64> = (0..200).map(|k| k as f64 * 0.5).collect();
    let mut y = vec![f64::NAN; t.len()];
    let rc = unsafe { cloaksim_closed_form_tone(20.0, 7.6648, 0.0, 7.66, 10.1, 140.6, t.as_ptr(), t.len(), y.as_mut_ptr()) };
    assert_eq!(rc, CLOAKSIM_OK);
    assert_eq!(y[0], 0.0);
    assert!(y.iter().all(|v| v.is_finite()));
    assert!(y.iter().any(|v| v.abs() > 1.0));
    let zero = unsafe { cloaksim_closed_form_tone(0.0, 7.6648, 0.0, 7.66, 10.1, 140.6, t.as_ptr(), t.len(), y.as_mut_ptr()) };
    assert_eq!(zero, CLOAKSIM_OK);
    assert!(y.iter().all(|v| *v == 0.0));
    let bad = unsafe { cloaksim_closed_form_tone(1.0, 7.0, 0.0, 7.0, -1.0, 1.0, t.as_ptr(), t.len(), y.as_mut_ptr()) };
    assert_eq!(bad, CLOAKSIM_ERR_ARGUMENT);
}

#[test]
fn header_declares_exports_and_compiles() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR"));
    let h = std::fs::read_to_string(dir.join("include/cloaksim.h")).unwrap();
    let src = std::fs::read_to_string(dir.join("src/lib.rs")).unwrap();
    for line in src.lines() {
        if let Some(rest) = line.split("extern \"C\" fn ").nth(1) {
            let name = rest.split('(').next().unwrap();
            assert!(h.contains(&format!("{name}(")), "{name} missing from header");
        }
    }
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    match std::process::Command::new(&cc).args(["-fsyntax-only", "-x", "c", "-std=c99", "-Wall", "-Werror"]).arg(dir.join("include/cloaksim.h")).status() {
        Ok(s) => assert!(s.success(), "header does not compile"),
        Err(e) => eprintln!("skipping C compile check: {cc}: {e}"),
    }
}

