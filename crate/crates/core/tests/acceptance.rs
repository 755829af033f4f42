// SPDX-License-Identifier: Apache-2.0
//! Acceptance suite. Each test writes one `criterion N ...: PASS|FAIL` line
//! to stdout (bypassing capture) and then asserts.

use cloaksim::cli::output::Table;
use cloaksim::cli::runner::{self, RunOutput};
use cloaksim::cli::{bundled, scenario::Scenario};
use cloaksim::cloaking::{closed_form_tone, exact_tone, solve_alpha, ClosedFormParams, Miscalibration, TimeGrid};
use cloaksim::model::{hybridize, DriveSpec, Port};
use cloaksim::protocols::readout::{self, DispersiveParams, ReadoutDrive};
use cloaksim::units::{ghz, mhz};
use cloaksim::{linalg, C64};
use ndarray::array;
use serde_json::Value;
use std::io::Write;

fn report(n: u32, name: &str, ok: bool, detail: String) {
    let verdict = if ok { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "criterion {n} {name}: {verdict} ({detail})");
    let _ = out.flush();
}

fn run(name: &str, set: &[&str]) -> RunOutput {
    let text = bundled(name).unwrap();
    let sets: Vec<String> = set.iter().map(|s| s.to_string()).collect();
    let sc = Scenario::parse_with_overrides(text, &sets).unwrap();
    runner::run(&sc).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn f(v: &Value, k: &str) -> f64 {
    v[k].as_f64().unwrap_or_else(|| panic!("{k} missing in {v}"))
}

fn col(t: &Table, name: &str) -> Vec<f64> {
    t.column(name).unwrap_or_else(|| panic!("column {name}"))
}

fn fig4a_dispersive() -> DispersiveParams {
    let spec = Scenario::parse(bundled("fig4a").unwrap()).unwrap().system_spec().unwrap();
    let dq = cloaksim::model::dressed_quantities(&spec).unwrap();
    DispersiveParams::from_dressed(&dq, spec.omega_r, spec.dissipation.kappa)
}

#[test]
fn criterion_1_cloaking_identity() {
    let tls = run("selftest_cloaking_tls", &[]);
    let tr = run("selftest_cloaking_transmon", &["eps1_MHz=20"]);
    let (a, b) = (f(&tls.summary, "max_trace_distance"), f(&tr.summary, "max_trace_distance"));
    let ok = a < 1e-6 && b < 1e-6;
    report(1, "cloaking identity", ok, format!("max trace distance tls {a:.2e}, transmon at 20 MHz {b:.2e}; tol 1e-6"));
    assert!(ok);
}

#[test]
fn criterion_2_vacuum_rabi() {
    let a = run("fig2a", &[]);
    let b = run("fig2b", &[]);
    let dp = f(&a.summary, "max_population_deviation").max(f(&b.summary, "max_population_deviation"));
    let dn = f(&a.summary, "max_photon_deviation").max(f(&b.summary, "max_photon_deviation"));
    let snaps = b.summary["snapshots"].as_array().unwrap();
    let wmin = |p: f64| snaps.iter().find(|s| (f(s, "rabi_periods") - p).abs() < 1e-9).map(|s| f(s, "W_min")).unwrap();
    let (w1, w32) = (wmin(1.0), wmin(1.5));
    let parts = [dp < 1e-6, dn < 1e-3, w1 > 0.0, w32 < -0.5];
    let ok = parts.iter().all(|x| *x);
    report(
        2,
        "vacuum Rabi under cloaking",
        ok,
        format!(
            "population dev {dp:.2e} (<1e-6 {}), photon dev {dn:.2e} (<1e-3 {}), W_min at 1 period {w1:.3e} (>0 {}), W_min at 3/2 periods {w32:.4} (< -0.5 {})",
            parts[0], parts[1], parts[2], parts[3]
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_3_stark_shift_and_dephasing() {
    let r = run("fig3b", &[]);
    let t = &r.tables[0];
    let r2w = r.summary["delta_omega_vs_eps1_sq"]["r2"].as_f64().unwrap();
    let r2g = r.summary["delta_Gamma_vs_eps1_sq"]["r2"].as_f64().unwrap();
    let eps = col(t, "eps1_MHz");
    let k = (0..eps.len()).max_by(|&i, &j| eps[i].total_cmp(&eps[j])).unwrap();
    let (w, g) = (col(t, "delta_omega_MHz")[k], col(t, "delta_Gamma_MHz")[k]);
    let (cw, cg) = (col(t, "delta_omega_cancel_MHz")[k], col(t, "delta_Gamma_cancel_MHz")[k]);
    let (rw, rg) = (cw.abs() / w.abs(), cg.abs() / g.abs());
    let ok = r2w > 0.99 && r2g > 0.99 && rw < 0.01 && rg < 0.01;
    report(
        3,
        "Ramsey shift and dephasing",
        ok,
        format!("R2 vs eps1^2: domega {r2w:.5}, dGamma {r2g:.5}; at {} MHz domega {w:.3} MHz dGamma {g:.3} MHz, cancelled ratios {rw:.1e} {rg:.1e}", eps[k]),
    );
    assert!(ok);
}

#[test]
fn criterion_4_tls_spectra() {
    let r = run("fig3a", &[]);
    let bare = f(&r.summary, "bare_omega_q_GHz");
    let p = &r.tables[1];
    let (eps, cancel, peak, fwhm) = (col(p, "eps1_MHz"), col(p, "cancel"), col(p, "peak_GHz"), col(p, "fwhm_MHz"));
    let z = (0..eps.len()).find(|&i| eps[i] == 0.0).unwrap();
    let (p0, w0) = (peak[z], fwhm[z]);
    let driven: Vec<usize> = (0..eps.len()).filter(|&i| eps[i] > 0.0 && cancel[i] == 0.0).collect();
    let cancelled: Vec<usize> = (0..eps.len()).filter(|&i| eps[i] > 0.0 && cancel[i] == 1.0).collect();
    let mut chain = vec![z];
    chain.extend(&driven);
    let monotone = chain.windows(2).all(|w| peak[w[1]] < peak[w[0]] && fwhm[w[1]] > fwhm[w[0]]);
    let spread_mhz = cancelled.iter().map(|&i| (peak[i] - p0).abs() * 1e3).fold(0.0, f64::max);
    let lamb = (p0 - bare) * 1e3;
    let ok = monotone && driven.len() == 6 && cancelled.len() == 6 && spread_mhz < 0.01 * w0 && lamb.abs() > 10.0 * w0;
    report(
        4,
        "two-level spectra",
        ok,
        format!("uncancelled shift and broadening monotone {monotone}; cancelled peak spread {spread_mhz:.2e} MHz vs 1% of linewidth {:.2e} MHz; Lamb shift {lamb:.3} MHz kept", 0.01 * w0),
    );
    assert!(ok);
}

#[test]
fn criterion_5_gate_parameters() {
    let o = run("gate_opt", &[]);
    let s = &o.summary;
    let (e, d, p, err) = (f(s, "eps_g_MHz"), f(s, "d_g"), f(s, "phi_g_turns"), f(s, "error"));
    let opt_ok = (e / 28.51 - 1.0).abs() <= 0.02 && (d - 0.09).abs() <= 0.01 && (p + 0.027).abs() <= 0.003 && (err - 0.003).abs() <= 0.001;
    let sw = run("smfig1a", &["uncancelled=false", "protocol.eps1_MHz=[0,3,6,9,12,15]"]);
    let errs = col(&sw.tables[0], "error");
    let spread = errs.iter().cloned().fold(f64::MIN, f64::max) - errs.iter().cloned().fold(f64::MAX, f64::min);
    let ok = opt_ok && spread < 1e-4 && errs.len() == 6;
    report(
        5,
        "DRAG gate",
        ok,
        format!("optimum eps_g {e:.3} MHz, d_g {d:.4}, phi_g {p:.5} turns, error {err:.5}; cloaked error spread over 0-15 MHz {spread:.1e}"),
    );
    assert!(ok);
}

#[test]
fn criterion_6_purcell_gate() {
    let r = run("smfig2", &["protocol.eps1_MHz=[0,2,6,12]"]);
    let t = &r.tables[0];
    let (cancel, err, n) = (col(t, "cancel"), col(t, "error"), col(t, "photons"));
    let cloaked: Vec<f64> = (0..err.len()).filter(|&i| cancel[i] == 1.0).map(|i| err[i]).collect();
    let flat = cloaked.iter().all(|e| (e - 0.00163).abs() <= 0.0003);
    let spread = cloaked.iter().cloned().fold(f64::MIN, f64::max) - cloaked.iter().cloned().fold(f64::MAX, f64::min);
    let mut open: Vec<(f64, f64)> = (0..err.len()).filter(|&i| cancel[i] == 0.0).map(|i| (n[i], err[i])).collect();
    open.sort_by(|a, b| a.0.total_cmp(&b.0));
    let threshold = open.iter().find(|x| x.1 > 0.01).map(|x| x.0);
    let rising = open.windows(2).all(|w| w[1].1 > w[0].1);
    let beyond = threshold.is_some_and(|n0| open.iter().filter(|x| x.0 >= n0).all(|x| x.1 > 0.01));
    let ok = flat && rising && beyond;
    report(
        6,
        "Purcell-filtered gate",
        ok,
        format!(
            "cloaked error {:.4}% (spread {spread:.1e}); uncloaked rises {}, above 1% from {:.3} photons; uncloaked errors {:?}",
            100.0 * cloaked[0],
            rising,
            threshold.unwrap_or(f64::NAN),
            open.iter().map(|x| format!("{:.3}%@{:.3}", 100.0 * x.1, x.0)).collect::<Vec<_>>()
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_7_closed_forms() {
    // Purcell hybridization against a 2x2 eigensolve.
    let mut hy_err: f64 = 0.0;
    for (wr, wf, j) in [(7.64744, 7.63166, 26.14e-3), (7.5, 7.7, 0.05), (7.6, 7.6, 0.02), (7.0, 6.0, 0.0)] {
        let (wr, wf, j) = (ghz(wr), ghz(wf), ghz(j));
        let h = hybridize(wr, wf, j).unwrap();
        let m = array![[C64::new(wr, 0.0), C64::new(j, 0.0)], [C64::new(j, 0.0), C64::new(wf, 0.0)]];
        let (w, v) = linalg::eigh(&m).unwrap();
        let top = if w[0] > w[1] { 0 } else { 1 };
        let vp = [v[[0, top]], v[[1, top]]];
        let s = if vp[0].re * h.cos_half + vp[1].re * h.sin_half < 0.0 { -1.0 } else { 1.0 };
        hy_err = hy_err
            .max((h.omega_plus - w[top]).abs() / w[top])
            .max((h.omega_minus - w[1 - top]).abs() / w[1 - top])
            .max((s * vp[0] - h.cos_half).norm())
            .max((s * vp[1] - h.sin_half).norm());
    }

    // Closed-form tone against the tone built from the integrated field.
    let mut tone_err: f64 = 0.0;
    for (eps, phi1, w1) in [(10.0, 0.0, 7.6648), (20.0, 0.7, 7.6648), (20.0, -1.3, 7.655)] {
        let p = ClosedFormParams { eps1: mhz(eps), omega1: ghz(w1), phi1, omega_r: ghz(7.66), kappa: mhz(10.1), g: mhz(140.6), miscalibration: Miscalibration::default() };
        let t_end = 10.0 / p.kappa;
        let grid = TimeGrid::for_carrier(t_end, p.omega1, 64).unwrap();
        let tr = solve_alpha(&DriveSpec::sine(Port::Cavity, p.eps1, p.omega1, phi1), p.omega_r, p.kappa, C64::default(), &grid).unwrap();
        let (ex, cf) = (exact_tone(&tr, p.g), closed_form_tone(&p, false));
        let amax = p.branches().a_minus.abs();
        for k in 0..grid.n {
            tone_err = tone_err.max((ex.eval(grid.t(k)) - cf.eval(grid.t(k))).abs() / amax);
        }
    }

    // Pointer states relax onto the Lorentzian steady states.
    let p = fig4a_dispersive();
    let w1 = p.omega_ro();
    let mut ptr_err: f64 = 0.0;
    for d in [ReadoutDrive { eps: mhz(30.0), phi: 0.0 }, ReadoutDrive { eps: mhz(12.0), phi: 2.1 }] {
        let t_end = 70.0 / p.kappa;
        let times: Vec<f64> = (0..=200).map(|k| t_end * k as f64 / 200.0).collect();
        let r = readout::arm_and_release(&p, w1, None, 0.0, &d, &times, 1.0).unwrap();
        for (a, excited) in [(*r.alpha_g.last().unwrap(), false), (*r.alpha_e.last().unwrap(), true)] {
            let s = readout::steady_release(&p, excited, w1, &d);
            let lor = C64::from_polar(0.5 * d.eps, d.phi) / C64::new(if excited { p.omega_e } else { p.omega_g } - w1, -0.5 * p.kappa);
            ptr_err = ptr_err.max((a - s).norm() / s.norm()).max((s - lor).norm() / lor.norm());
        }
    }

    let ok = hy_err < 1e-10 && tone_err < 1e-9 && ptr_err < 1e-8;
    report(7, "closed forms vs numerics", ok, format!("hybridization {hy_err:.1e} (<1e-10), tone {tone_err:.1e} |A_-| (<1e-9), pointer states {ptr_err:.1e} (<1e-8)"));
    assert!(ok);
}

#[test]
fn criterion_8_arm_and_release() {
    let r = run("fig4a", &[]);
    let s = &r.summary;
    let (ratio, phase, diff) = (f(s, "arming_ratio"), f(s, "arming_phase_turns"), f(s, "max_arming_branch_difference"));
    let sep = f(s, "separation_ratio");

    // Semiclassical oracle: each branch relaxes linearly from its start value.
    let p = fig4a_dispersive();
    let w1 = p.omega_ro();
    let rel = ReadoutDrive { eps: mhz(30.0), phi: 0.0 };
    let plan = readout::arming_optimization(&p, w1, &rel);
    let armed = readout::steady_state(p.omega_r_bare, w1, p.kappa, &plan.arm);
    let t = 1.0 / p.kappa;
    let at = |a0: C64, excited: bool| {
        let s = readout::steady_release(&p, excited, w1, &rel);
        let w = if excited { p.omega_e } else { p.omega_g };
        s + (a0 - s) * (-C64::new(0.5 * p.kappa, w - w1) * t).exp()
    };
    let oracle = (at(armed, false) - at(armed, true)).norm() / (at(C64::default(), false) - at(C64::default(), true)).norm();
    const FROZEN: f64 = 4.256140209519053;

    let parts = [diff == 0.0, (ratio - 0.58).abs() <= 0.02, (phase - 0.154).abs() <= 0.01, sep > 1.0, (sep / oracle - 1.0).abs() < 1e-4, (sep / FROZEN - 1.0).abs() < 1e-6];
    let ok = parts.iter().all(|x| *x);
    report(
        8,
        "arm and release",
        ok,
        format!("arming |a_g - a_e| max {diff:e}; ratio {ratio:.4} (0.58 +- 0.02); phase {phase:.4} turns (0.154 +- 0.01); separation ratio at 1/kappa {sep:.6}, oracle {oracle:.6}, frozen {FROZEN:.6}"),
    );
    assert!(ok);
}

#[test]
fn criterion_9_readout_statistics() {
    let r = run("readout_stats", &[]);
    let t = &r.tables[0];
    let (ti, ar) = (col(t, "t_int_ns"), col(t, "arm_release"));
    let (peg, th, pge, sig) = (col(t, "p_e_given_g"), col(t, "p_e_given_g_theory"), col(t, "p_g_given_e"), col(t, "binomial_sigma"));
    let (oh, ot) = (col(t, "overlap_histogram"), col(t, "overlap_theory"));
    let worst = (0..ti.len()).map(|i| ((peg[i] - th[i]).abs() / sig[i]).max((pge[i] - th[i]).abs() / sig[i])).fold(0.0, f64::max);
    let mut monotone = true;
    for m in [0.0, 1.0] {
        let idx: Vec<usize> = (0..ti.len()).filter(|&i| ar[i] == m).collect();
        monotone &= idx.windows(2).all(|w| ti[w[1]] > ti[w[0]] && ot[w[1]] < ot[w[0]] && oh[w[1]] < oh[w[0]]);
    }
    let ok = worst < 3.0 && monotone;
    report(9, "readout statistics", ok, format!("max |P_hist - P_erfc| {worst:.2} binomial sigma at 1e5 shots (<3); overlap decreasing in t_int {monotone}"));
    assert!(ok);
}

#[test]
fn criterion_10_calibration() {
    let r = run("calibration", &[]);
    let s = &r.summary;
    let (ea, ep) = (f(s, "relative_A_error"), f(s, "relative_phi_error"));
    let (obj, obj0) = (f(s, "objective_MHz"), f(s, "objective_without_tone_MHz"));
    let ok = ea < 0.01 && ep < 0.01 && obj < 0.01 * obj0;
    report(
        10,
        "tone calibration",
        ok,
        format!("seed offsets {:+.0}% / {:+.2} rad; A off by {:.2}%, phase off by {:.2}%; objective {obj:.2e} MHz vs {obj0:.3} MHz without tone", 100.0 * (f(s, "seed_A_MHz") / f(s, "analytic_A_MHz") - 1.0), f(s, "seed_phi_rad") - f(s, "analytic_phi_rad"), 100.0 * ea, 100.0 * ep),
    );
    assert!(ok);
}
