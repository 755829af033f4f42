// SPDX-License-Identifier: Apache-2.0
//! Protocol dispatch for scenarios.

#![allow(non_snake_case)]

use super::output::Table;
use super::scenario::{ConfigError, FrameKind, GateBlock, GateSweepKind, ProtocolBlock, Scenario, ToneKind, Values};
use crate::cloaking::{self, CancellationTone, ClosedFormParams, Miscalibration};
use crate::hilbert::DensityState;
use crate::lindblad::{self, IntegratorConfig};
use crate::model::{self, DriveSpec, Port, SystemSpec, Variant, CAVITY};
use crate::observables::{self, linspace, SpectrumDrive};
use crate::ode::OdeConfig;
use crate::optimize::NelderMeadConfig;
use crate::protocols::gate::{GateSpec, GateSweep, GateSystem, TargetFrame};
use crate::protocols::rabi::RabiConfig;
use crate::protocols::ramsey::{self, RamseyConfig};
use crate::protocols::readout::{self, DispersiveParams, ReadoutDrive};
use crate::protocols::{self, calibration, classical_field, exact_tone_for, FieldFrame};
use crate::units::{ghz, mhz, to_ghz, to_mhz};
use crate::{Error, C64};
use rayon::prelude::*;
use serde_json::{json, Value};
use std::f64::consts::TAU;

#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Physics { context: String, source: Error },
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "configuration error: {e}"),
            RunError::Physics { context, source } => write!(f, "{context}: {source}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

/// Tables and a JSON summary produced by one scenario.
#[derive(Debug, Default)]
pub struct RunOutput {
    pub tables: Vec<Table>,
    pub summary: Value,
}

type R<T> = Result<T, RunError>;

fn ctx<T>(sc: &Scenario, what: &str, r: crate::Result<T>) -> R<T> {
    r.map_err(|source| RunError::Physics { context: format!("scenario {} ({what})", sc.name), source })
}

fn cfg_err<T>(m: impl Into<String>) -> R<T> {
    Err(RunError::Config(ConfigError(m.into())))
}

pub fn integrator(sc: &Scenario) -> IntegratorConfig {
    match &sc.integrator {
        Some(b) => IntegratorConfig::default().with_ode(OdeConfig::adaptive(b.rtol, b.atol)),
        None => IntegratorConfig::default(),
    }
}

fn require(sc: &Scenario, spec: &SystemSpec, allowed: &[Variant]) -> R<()> {
    if allowed.contains(&spec.variant) {
        Ok(())
    } else {
        cfg_err(format!("protocol {} does not support model {:?}", sc.protocol.kind(), spec.variant))
    }
}

fn gate_spec(b: &GateBlock, carrier: f64) -> GateSpec {
    GateSpec { t_g: b.t_g_ns, eps_g: mhz(b.eps_g_MHz), d_g: b.d_g, phi_g: b.phi_g_turns * TAU, carrier }
}

fn cancel_port(spec: &SystemSpec) -> Port {
    if spec.variant == Variant::TransmonPurcell {
        Port::Purcell
    } else {
        Port::Cavity
    }
}

/// Builds the tone selected by the scenario for `drive`, over [0, t_end].
pub fn build_tone(sc: &Scenario, spec: &SystemSpec, drive: &DriveSpec, t_end: f64) -> R<Option<CancellationTone>> {
    let t = sc.tone.clone().unwrap_or_default();
    let eps = drive.envelope.eval(0.0);
    let p = ClosedFormParams {
        eps1: eps,
        omega1: drive.carrier,
        phi1: drive.phase,
        omega_r: spec.omega_r,
        kappa: spec.dissipation.kappa,
        g: spec.g,
        miscalibration: sc.miscalibration(),
    };
    let closed_ok = spec.variant != Variant::TransmonPurcell && drive.waveform == model::Waveform::Sine;
    Ok(match t.strategy {
        ToneKind::None => None,
        ToneKind::Exact => {
            let field = ctx(sc, "classical field", classical_field(spec, drive, t_end))?;
            Some(ctx(sc, "exact tone", exact_tone_for(spec, &field))?)
        }
        ToneKind::ClosedForm | ToneKind::Truncated if closed_ok => Some(cloaking::closed_form_tone(&p, t.strategy == ToneKind::Truncated)),
        ToneKind::Ansatz if closed_ok => {
            let (a0, phi0) = cloaking::ansatz_seed(&ClosedFormParams { miscalibration: Miscalibration::default(), ..p });
            let a = t.A_MHz.map(mhz).unwrap_or(a0);
            Some(cloaking::ansatz_tone(a, t.phi_rad.unwrap_or(phi0), drive.carrier, spec.dissipation.kappa))
        }
        _ => return cfg_err("closed-form and ansatz tones need a sine drive on a single-cavity model"),
    })
}

pub fn run(sc: &Scenario) -> R<RunOutput> {
    let spec = sc.system_spec()?;
    let icfg = integrator(sc);
    match &sc.protocol {
        ProtocolBlock::VacuumRabi { horizon_ns, n_times, snapshot_periods, wigner_extent, wigner_points, cancel } => {
            require(sc, &spec, &[Variant::TlsRwa])?;
            let d = sc.drive.as_ref().expect("checked");
            let drive = sc.drive_spec(d.eps1_MHz.unwrap_or(0.0), Port::Cavity, spec.omega_r);
            let rc = RabiConfig {
                horizon: *horizon_ns,
                n_times: *n_times,
                snapshot_periods: snapshot_periods.clone(),
                wigner_re: vec![0.0],
                wigner_im: vec![0.0],
                integrator: icfg,
            };
            let r = ctx(sc, "vacuum Rabi", protocols::vacuum_rabi(&spec, Some(&drive), *cancel, &rc))?;
            let mut t = Table::new(&sc.name, &["t_ns", "P_e_undriven", "P_e_cloaked", "n_cavity", "|alpha|^2", "n_undriven"])
                .meta("units", "t in ns; populations and photon numbers dimensionless")
                .meta("rabi_period_ns", r.rabi_period);
            for k in 0..r.times.len() {
                t.push(vec![r.times[k], r.p_e_undriven[k], r.p_e[k], r.n_cavity[k], r.alpha_sq[k], r.n_undriven[k]]);
            }
            let field = ctx(sc, "classical field", classical_field(&spec, &drive, *horizon_ns))?;
            let mut tables = vec![t];
            let mut snaps = Vec::new();
            for (p, s) in snapshot_periods.iter().zip(&r.snapshot_states) {
                let time = p * r.rabi_period;
                let a = field.alpha(time);
                let re = linspace(a.re - wigner_extent, a.re + wigner_extent, *wigner_points);
                let im = linspace(a.im - wigner_extent, a.im + wigner_extent, *wigner_points);
                let cav = ctx(sc, "partial trace", s.partial_trace(CAVITY))?;
                let w = ctx(sc, "Wigner", observables::wigner(&cav, &re, &im))?;
                let mut wt = Table::new(&format!("{}_wigner_{p}", sc.name), &["re_alpha", "im_alpha", "W"]).meta("rabi_periods", p).meta("t_ns", time);
                for (i, x) in re.iter().enumerate() {
                    for (j, y) in im.iter().enumerate() {
                        wt.push(vec![*x, *y, w.values[[i, j]]]);
                    }
                }
                let (amin_re, amin_im) = w.argmin();
                snaps.push(json!({"rabi_periods": p, "t_ns": time, "W_min": w.min(), "W_max": w.max(), "argmin": [amin_re, amin_im], "alpha": [a.re, a.im]}));
                tables.push(wt);
            }
            let dev_p = r.p_e.iter().zip(&r.p_e_undriven).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let dev_n = (0..r.times.len()).map(|k| (r.n_cavity[k] - r.alpha_sq[k] - r.n_undriven[k]).abs()).fold(0.0, f64::max);
            Ok(RunOutput { tables, summary: json!({"max_population_deviation": dev_p, "max_photon_deviation": dev_n, "snapshots": snaps}) })
        }
        ProtocolBlock::Spectrum { eps1_MHz, center_GHz, span_MHz, points } => {
            require(sc, &spec, &[Variant::TlsRwa])?;
            let omega = linspace(ghz(*center_GHz) - 0.5 * mhz(*span_MHz), ghz(*center_GHz) + 0.5 * mhz(*span_MHz), *points);
            let w1 = sc.drive.as_ref().and_then(|d| d.omega1_GHz).map(ghz).unwrap_or(spec.omega_r);
            let phi1 = sc.drive.as_ref().map(|d| d.phi1_rad).unwrap_or(0.0);
            let mut jobs = vec![(0.0, false)];
            for e in eps1_MHz.to_vec() {
                if e != 0.0 {
                    jobs.push((e, false));
                    jobs.push((e, true));
                }
            }
            let spectra: Vec<_> = jobs
                .par_iter()
                .map(|&(e, c)| {
                    let d = SpectrumDrive { eps1: mhz(e), omega1: w1, phi1, cancel: c };
                    observables::absorption_spectrum(&spec, if e == 0.0 { None } else { Some(&d) }, &omega)
                })
                .collect();
            let mut t = Table::new(&sc.name, &["eps1_MHz", "cancel", "omega_GHz", "S_per_GHz"]).meta("units", "S normalized per GHz of ordinary frequency");
            let mut peaks = Table::new(&format!("{}_peaks", sc.name), &["eps1_MHz", "cancel", "peak_GHz", "fwhm_MHz"]);
            for ((e, c), s) in jobs.iter().zip(spectra) {
                let s = ctx(sc, "spectrum", s)?;
                for (w, v) in s.omega.iter().zip(&s.values) {
                    t.push(vec![*e, *c as u8 as f64, to_ghz(*w), v * TAU]);
                }
                let (pk, _) = s.peak();
                peaks.push(vec![*e, *c as u8 as f64, to_ghz(pk), s.fwhm().map(to_mhz).unwrap_or(f64::NAN)]);
            }
            let bare = spec.omega_q.map(to_ghz).unwrap_or(f64::NAN);
            Ok(RunOutput { summary: json!({"bare_omega_q_GHz": bare, "peaks": table_json(&peaks)}), tables: vec![t, peaks] })
        }
        ProtocolBlock::RamseySweep { eps1_MHz, t_prep_ns, t_settle_ns, window_ns, dt_ns, frame, cancel } => {
            require(sc, &spec, &[Variant::TlsRwa, Variant::TransmonCosine])?;
            let dq = ctx(sc, "dressed spectrum", model::dressed_quantities(&spec))?;
            let mut rc = RamseyConfig::for_kappa(spec.dissipation.kappa.max(1e-9));
            rc.t_prep = *t_prep_ns;
            rc.t_settle = *t_settle_ns;
            rc.window = *window_ns;
            rc.dt = *dt_ns;
            rc.integrator = icfg;
            let driven_frame = match frame {
                FrameKind::Displaced => FieldFrame::Displaced { omega_ref: None },
                FrameKind::Pointer => FieldFrame::Displaced { omega_ref: Some(dq.omega_ro) },
                FrameKind::Lab => FieldFrame::Lab,
            };
            let cancel_frame = if *frame == FrameKind::Lab { FieldFrame::Lab } else { FieldFrame::Displaced { omega_ref: None } };
            let base = ctx(sc, "Ramsey baseline", ramsey::ramsey_baseline(&spec, &rc))?;
            let eps = eps1_MHz.to_vec();
            let rows: Vec<R<Vec<f64>>> = eps
                .par_iter()
                .map(|&e| {
                    let d = sc.drive_spec(e, Port::Cavity, dq.omega_ro);
                    let mut c = rc.clone();
                    c.frame = driven_frame;
                    let r = ctx(sc, &format!("Ramsey eps1 = {e} MHz"), ramsey::ramsey_with_baseline(&spec, Some(&d), None, &base, &c))?;
                    let (mut cw, mut cg) = (f64::NAN, f64::NAN);
                    if *cancel {
                        c.frame = cancel_frame;
                        let tone = build_tone(sc, &spec, &d, c.t_end())?;
                        let rr = ctx(sc, &format!("cancelled Ramsey eps1 = {e} MHz"), ramsey::ramsey_with_baseline(&spec, Some(&d), tone.as_ref(), &base, &c))?;
                        cw = to_mhz(rr.delta_omega);
                        cg = to_mhz(rr.delta_gamma);
                    }
                    Ok(vec![e, to_mhz(r.delta_omega), to_mhz(r.delta_gamma), cw, cg, r.residual])
                })
                .collect();
            let mut t = Table::new(&sc.name, &["eps1_MHz", "delta_omega_MHz", "delta_Gamma_MHz", "delta_omega_cancel_MHz", "delta_Gamma_cancel_MHz", "fit_residual"])
                .meta("units", "shifts and rates as ordinary frequencies (value/2pi) in MHz")
                .meta("omega_q_dressed_GHz", to_ghz(dq.omega_q));
            for r in rows {
                t.push(r?);
            }
            let x: Vec<f64> = t.column("eps1_MHz").unwrap().iter().map(|e| e * e).collect();
            let fit_w = linear_r2(&x, &t.column("delta_omega_MHz").unwrap());
            let fit_g = linear_r2(&x, &t.column("delta_Gamma_MHz").unwrap());
            Ok(RunOutput {
                summary: json!({
                    "baseline_gamma_per_us": base.gamma * 1e3,
                    "delta_omega_vs_eps1_sq": {"slope": fit_w.0, "intercept": fit_w.1, "r2": fit_w.2},
                    "delta_Gamma_vs_eps1_sq": {"slope": fit_g.0, "intercept": fit_g.1, "r2": fit_g.2},
                }),
                tables: vec![t],
            })
        }
        ProtocolBlock::GateSweep { gate, sweep, eps1_MHz, offsets, omega1_GHz, cancel, uncancelled } => {
            require(sc, &spec, &[Variant::TransmonCosine, Variant::TransmonPurcell])?;
            let sys = ctx(sc, "gate system", GateSystem::new(&spec, TargetFrame::Lab))?;
            let g = gate_spec(gate, sys.omega_q());
            let w1 = sc.drive.as_ref().and_then(|d| d.omega1_GHz).map(ghz).unwrap_or(sys.dressed.omega_ro);
            let eps: Vec<f64> = eps1_MHz.as_ref().map(Values::to_vec).unwrap_or_default();
            let need = |v: &Option<Values>, k: &str| -> R<Vec<f64>> { v.as_ref().map(Values::to_vec).ok_or_else(|| RunError::Config(ConfigError(format!("protocol.{k} is required for sweep {sweep:?}")))) };
            let mut jobs: Vec<(f64, GateSweep)> = Vec::new();
            match sweep {
                GateSweepKind::DriveAmplitude => {
                    for &e in &eps {
                        for c in [(*cancel, true), (*uncancelled, false)].iter().filter(|x| x.0).map(|x| x.1) {
                            jobs.push((c as u8 as f64, GateSweep::DriveAmplitude { eps1: vec![mhz(e)], cancel: c }));
                        }
                    }
                }
                GateSweepKind::CavityFrequencyOffset | GateSweepKind::PhaseOffset | GateSweepKind::AmplitudeOffset => {
                    let off = need(offsets, "offsets")?;
                    for &e in &eps {
                        for &o in &off {
                            let s = match sweep {
                                GateSweepKind::CavityFrequencyOffset => GateSweep::CavityFrequencyOffset { offsets: vec![mhz(o)], eps1: vec![mhz(e)] },
                                GateSweepKind::PhaseOffset => GateSweep::PhaseOffset { offsets: vec![o], eps1: vec![mhz(e)] },
                                _ => GateSweep::AmplitudeOffset { offsets: vec![o], eps1: vec![mhz(e)] },
                            };
                            jobs.push((1.0, s));
                        }
                    }
                }
                GateSweepKind::AnsatzFrequency => {
                    let e = *eps.first().ok_or_else(|| RunError::Config(ConfigError("protocol.eps1_MHz is required".into())))?;
                    for w in need(omega1_GHz, "omega1_GHz")? {
                        jobs.push((1.0, GateSweep::AnsatzFrequency { omega1: vec![ghz(w)], eps1: mhz(e) }));
                    }
                }
            }
            let frame = FieldFrame::Displaced { omega_ref: None };
            let rows: Vec<R<Vec<f64>>> = jobs
                .par_iter()
                .map(|(c, s)| {
                    let r = ctx(sc, "gate sweep", protocols::gate_error_sweeps(&sys, &g, s, w1, frame, &icfg))?;
                    let row = r[0];
                    let key = match sweep {
                        GateSweepKind::CavityFrequencyOffset => to_mhz(row.key),
                        GateSweepKind::AnsatzFrequency => to_ghz(row.key),
                        GateSweepKind::DriveAmplitude => to_mhz(row.key),
                        _ => row.key,
                    };
                    Ok(vec![key, to_mhz(row.eps1), *c, row.error, row.photons])
                })
                .collect();
            let key_name = match sweep {
                GateSweepKind::DriveAmplitude => "eps1_key_MHz",
                GateSweepKind::CavityFrequencyOffset => "omega_r_offset_MHz",
                GateSweepKind::PhaseOffset => "delta_phi",
                GateSweepKind::AmplitudeOffset => "delta_eps",
                GateSweepKind::AnsatzFrequency => "omega1_GHz",
            };
            let mut t = Table::new(&sc.name, &[key_name, "eps1_MHz", "cancel", "error", "photons"]).meta("omega1_GHz", to_ghz(w1)).meta("omega_q_dressed_GHz", to_ghz(sys.omega_q()));
            for r in rows {
                t.push(r?);
            }
            let undriven = ctx(sc, "gate fidelity", protocols::average_gate_fidelity(&sys, &g, None, &icfg))?;
            Ok(RunOutput { summary: json!({"undriven_error": undriven.error, "rows": table_json(&t)}), tables: vec![t] })
        }
        ProtocolBlock::GateOptimize { gate, max_iter } => {
            require(sc, &spec, &[Variant::TransmonCosine, Variant::TransmonPurcell])?;
            let sys = ctx(sc, "gate system", GateSystem::new(&spec, TargetFrame::Lab))?;
            let g = gate_spec(gate, sys.omega_q());
            let nm = NelderMeadConfig { max_iter: *max_iter, ..Default::default() };
            let r = ctx(sc, "gate optimization", protocols::optimize_gate(&sys, &g, &nm, &icfg))?;
            let mut t = Table::new(&format!("{}_trace", sc.name), &["iteration", "eps_g_MHz", "d_g", "phi_g_turns", "error"]);
            for (k, (x, f)) in r.trace.iter().enumerate() {
                t.push(vec![k as f64, to_mhz(x[0]), x[1], x[2] / TAU, *f]);
            }
            Ok(RunOutput {
                summary: json!({
                    "eps_g_MHz": to_mhz(r.x[0]), "d_g": r.x[1], "phi_g_turns": r.x[2] / TAU, "error": r.objective,
                    "iterations": r.iterations, "evaluations": r.evaluations, "omega_q_dressed_GHz": to_ghz(sys.omega_q()),
                }),
                tables: vec![t],
            })
        }
        ProtocolBlock::ArmRelease { release_eps_MHz, release_phi_rad, t_arm_ns, t_end_ns, dt_ns, eta } => {
            require(sc, &spec, &[Variant::TransmonCosine, Variant::TlsRwa])?;
            let (p, w1) = dispersive(sc, &spec)?;
            let release = ReadoutDrive { eps: mhz(*release_eps_MHz), phi: *release_phi_rad };
            let plan = readout::arming_optimization(&p, w1, &release);
            let n = (t_end_ns / dt_ns).round() as usize;
            let t_k = 1.0 / p.kappa;
            let mut times: Vec<f64> = (0..=n).map(|k| k as f64 * dt_ns).collect();
            if t_k < times[n] {
                times.push(t_k);
                times.sort_by(f64::total_cmp);
                times.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
            }
            let ar = ctx(sc, "arm and release", readout::arm_and_release(&p, w1, Some(&plan.arm), *t_arm_ns, &release, &times, *eta))?;
            let disp = ctx(sc, "dispersive pulse", readout::arm_and_release(&p, w1, None, 0.0, &release, &times, *eta))?;
            let mut t = Table::new(
                &sc.name,
                &["t_ns", "re_alpha_g_ar", "im_alpha_g_ar", "re_alpha_e_ar", "im_alpha_e_ar", "re_alpha_g_disp", "im_alpha_g_disp", "re_alpha_e_disp", "im_alpha_e_disp", "snr_ar", "snr_disp", "overlap_ar", "overlap_disp"],
            )
            .meta("omega1_GHz", to_ghz(w1))
            .meta("frame", "rotating at omega1");
            for k in 0..times.len() {
                let (a, b) = (&ar, &disp);
                t.push(vec![
                    times[k], a.alpha_g[k].re, a.alpha_g[k].im, a.alpha_e[k].re, a.alpha_e[k].im, b.alpha_g[k].re, b.alpha_g[k].im, b.alpha_e[k].re, b.alpha_e[k].im, a.snr[k], b.snr[k], a.overlap[k], b.overlap[k],
                ]);
            }
            let mut arm = Table::new(&format!("{}_arming", sc.name), &["t_ns", "re_alpha_g", "im_alpha_g", "re_alpha_e", "im_alpha_e"]);
            for (tt, g, e) in &ar.arming {
                arm.push(vec![*tt, g.re, g.im, e.re, e.im]);
            }
            let sep = |r: &readout::ReadoutResult| -> f64 {
                let k = r.index_at(t_k).unwrap_or(r.times.len() - 1);
                (r.alpha_g[k] - r.alpha_e[k]).norm()
            };
            let arm_diff = ar.arming.iter().map(|(_, g, e)| (g - e).norm()).fold(0.0, f64::max);
            Ok(RunOutput {
                summary: json!({
                    "arming_ratio": plan.ratio, "arming_phase_turns": plan.phase / TAU,
                    "arm_eps_MHz": to_mhz(plan.arm.eps), "arm_phi_rad": plan.arm.phi,
                    "max_arming_branch_difference": arm_diff,
                    "separation_at_1_over_kappa_ar": sep(&ar), "separation_at_1_over_kappa_disp": sep(&disp),
                    "separation_ratio": sep(&ar) / sep(&disp),
                    "chi_MHz": to_mhz(p.omega_e - p.omega_g),
                }),
                tables: vec![t, arm],
            })
        }
        ProtocolBlock::ReadoutHistograms { release_eps_MHz, t_arm_ns, t_int_ns, n_shots, bins, eta } => {
            require(sc, &spec, &[Variant::TransmonCosine, Variant::TlsRwa])?;
            let (p, w1) = dispersive(sc, &spec)?;
            let release = ReadoutDrive { eps: mhz(*release_eps_MHz), phi: 0.0 };
            let plan = readout::arming_optimization(&p, w1, &release);
            let tint = t_int_ns.to_vec();
            let t_max = tint.iter().cloned().fold(0.0, f64::max);
            let dt = 0.5;
            let n = (t_max / dt).ceil() as usize + 1;
            let mut times: Vec<f64> = (0..=n).map(|k| k as f64 * dt).collect();
            times.extend(tint.iter().copied());
            times.sort_by(f64::total_cmp);
            times.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
            let ar = ctx(sc, "arm and release", readout::arm_and_release(&p, w1, Some(&plan.arm), *t_arm_ns, &release, &times, *eta))?;
            let disp = ctx(sc, "dispersive pulse", readout::arm_and_release(&p, w1, None, 0.0, &release, &times, *eta))?;
            let mut t = Table::new(&sc.name, &["t_int_ns", "arm_release", "p_e_given_g", "p_e_given_g_theory", "p_g_given_e", "overlap_histogram", "overlap_theory", "fidelity", "binomial_sigma"]);
            for (k, &ti) in tint.iter().enumerate() {
                for (m, r) in [(0.0, &disp), (1.0, &ar)] {
                    let h = ctx(sc, "histograms", readout::readout_histograms(r, ti, *n_shots, *bins, sc.seed.wrapping_add(2 * k as u64 + m as u64)))?;
                    let sig = (h.p_e_given_g_theory * (1.0 - h.p_e_given_g_theory) / *n_shots as f64).sqrt();
                    t.push(vec![ti, m, h.p_e_given_g, h.p_e_given_g_theory, h.p_g_given_e, h.overlap_histogram, h.overlap_theory, h.fidelity, sig]);
                }
            }
            Ok(RunOutput { summary: json!({"rows": table_json(&t)}), tables: vec![t] })
        }
        ProtocolBlock::Calibration { t_prep_ns, t_settle_ns, window_ns, dt_ns, seed_offset, max_iter } => {
            require(sc, &spec, &[Variant::TransmonCosine, Variant::TlsRwa])?;
            let dq = ctx(sc, "dressed spectrum", model::dressed_quantities(&spec))?;
            let d = sc.drive.as_ref().expect("checked");
            let drive = sc.drive_spec(d.eps1_MHz.unwrap_or(0.0), Port::Cavity, dq.omega_ro);
            if drive.waveform != model::Waveform::Sine {
                return cfg_err("calibration needs a sine drive");
            }
            let mut rc = RamseyConfig::for_kappa(spec.dissipation.kappa);
            rc.t_prep = *t_prep_ns;
            rc.t_settle = *t_settle_ns;
            rc.window = *window_ns;
            rc.dt = *dt_ns;
            rc.frame = FieldFrame::Displaced { omega_ref: None };
            rc.integrator = icfg;
            let p = ClosedFormParams { eps1: drive.envelope.eval(0.0), omega1: drive.carrier, phi1: drive.phase, omega_r: spec.omega_r, kappa: spec.dissipation.kappa, g: spec.g, miscalibration: Miscalibration::default() };
            let (a0, phi0) = cloaking::ansatz_seed(&p);
            let seed = (a0 * (1.0 + seed_offset[0]), phi0 + seed_offset[1]);
            let base = ctx(sc, "Ramsey baseline", ramsey::ramsey_baseline(&spec, &rc))?;
            let nm = NelderMeadConfig { max_iter: *max_iter, ..Default::default() };
            let r = ctx(sc, "calibration", calibration::calibrate_cancellation(&spec, &drive, seed, &base, &nm, &rc))?;
            let f0 = ctx(sc, "objective without tone", calibration::cancellation_objective(&spec, &drive, None, &base, &rc))?;
            let mut t = Table::new(&sc.name, &["iteration", "A_MHz", "phi_rad", "objective_MHz"]).meta("units", "objective |dGamma + i domega| as value/2pi in MHz");
            for (k, (x, f)) in r.trace.iter().enumerate() {
                t.push(vec![k as f64, to_mhz(x[0]), x[1], to_mhz(*f)]);
            }
            Ok(RunOutput {
                summary: json!({
                    "A_MHz": to_mhz(r.x[0]), "phi_rad": r.x[1], "objective_MHz": to_mhz(r.objective),
                    "analytic_A_MHz": to_mhz(a0), "analytic_phi_rad": phi0,
                    "seed_A_MHz": to_mhz(seed.0), "seed_phi_rad": seed.1,
                    "objective_without_tone_MHz": to_mhz(f0),
                    "relative_A_error": (r.x[0] - a0).abs() / a0.abs(),
                    "relative_phi_error": (r.x[1] - phi0).abs() / phi0.abs(),
                    "evaluations": r.evaluations,
                }),
                tables: vec![t],
            })
        }
        ProtocolBlock::CloakingCheck { t_end_ns, n_times } => {
            require(sc, &spec, &[Variant::TlsRwa, Variant::TransmonCosine])?;
            let d = sc.drive.as_ref().expect("checked");
            let drive = sc.drive_spec(d.eps1_MHz.unwrap_or(0.0), cancel_port(&spec), spec.omega_r);
            let (times, dist) = ctx(sc, "cloaking check", cloaking_distance(&spec, &drive, *t_end_ns, *n_times, &icfg))?;
            let mut t = Table::new(&sc.name, &["t_ns", "trace_distance"]);
            for (a, b) in times.iter().zip(&dist) {
                t.push(vec![*a, *b]);
            }
            let worst = dist.iter().cloned().fold(0.0, f64::max);
            Ok(RunOutput { summary: json!({"max_trace_distance": worst}), tables: vec![t] })
        }
    }
}

fn dispersive(sc: &Scenario, spec: &SystemSpec) -> R<(DispersiveParams, f64)> {
    let dq = ctx(sc, "dressed spectrum", model::dressed_quantities(spec))?;
    let p = DispersiveParams::from_dressed(&dq, spec.omega_r, spec.dissipation.kappa);
    let w1 = sc.drive.as_ref().and_then(|d| d.omega1_GHz).map(ghz).unwrap_or(p.omega_ro());
    Ok((p, w1))
}

/// Trace distance between the undriven evolution and the lab-frame driven
/// evolution with the exact tone, displaced back by the classical field.
pub fn cloaking_distance(spec: &SystemSpec, drive: &DriveSpec, t_end: f64, n_times: usize, cfg: &IntegratorConfig) -> crate::Result<(Vec<f64>, Vec<f64>)> {
    let m = model::build(&spec.without_drives())?;
    let field = classical_field(spec, drive, t_end)?;
    let tone = exact_tone_for(spec, &field)?;
    let terms = protocols::driven_terms(spec, drive, Some(&tone), FieldFrame::Lab, t_end)?;
    let n = m.dim();
    let mut psi = ndarray::Array1::<C64>::zeros(n);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    psi[m.layout.flat_index(&[0, 0])] = C64::new(s, 0.0);
    psi[m.layout.flat_index(&[1, 0])] = C64::new(0.0, s);
    let rho0 = DensityState::pure(m.layout.clone(), &psi)?;
    let times = linspace(0.0, t_end, n_times.max(2));
    let cfg = cfg.clone().with_states();
    let a = lindblad::evolve_model(&m, &[], &rho0, &times, &cfg, &[])?;
    let b = lindblad::evolve_model(&m, &terms.terms, &rho0, &times, &cfg, &[])?;
    let (sa, sb) = (a.states.unwrap_or_default(), b.states.unwrap_or_default());
    let mut out = Vec::with_capacity(times.len());
    for (k, (x, y)) in sa.iter().zip(&sb).enumerate() {
        let yd = lindblad::displaced_transform(y, field.alpha(times[k]), CAVITY)?;
        out.push(x.trace_distance(&yd)?);
    }
    Ok((times, out))
}

/// Least-squares line y = a x + b and its R^2.
pub fn linear_r2(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let a = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let r2 = if sxx > 0.0 && syy > 0.0 { sxy * sxy / (sxx * syy) } else { f64::NAN };
    (a, my - a * mx, r2)
}

fn table_json(t: &Table) -> Value {
    Value::Array(
        t.rows
            .iter()
            .map(|r| Value::Object(t.columns.iter().zip(r).map(|(c, v)| (c.clone(), json!(v))).collect()))
            .collect(),
    )
}

/// Uniformly sampled tone (t_ns, E2/2pi in MHz) for the scenario's drive.
pub fn export_tone(sc: &Scenario, rate_gsps: f64) -> R<Table> {
    if !(rate_gsps > 0.0 && rate_gsps.is_finite()) {
        return cfg_err("--rate must be a positive number of GS/s");
    }
    let spec = sc.system_spec()?;
    let Some(d) = sc.drive.as_ref() else { return cfg_err("export-tone needs a drive block") };
    let default_w1 = match spec.variant {
        Variant::TlsRwa => spec.omega_r,
        _ => ctx(sc, "dressed spectrum", model::dressed_quantities(&spec))?.omega_ro,
    };
    let drive = sc.drive_spec(d.eps1_MHz.unwrap_or(0.0), cancel_port(&spec), default_w1);
    let t_end = sc.tone.as_ref().and_then(|t| t.t_end_ns).unwrap_or(200.0);
    let tone = build_tone(sc, &spec, &drive, t_end)?.unwrap_or_else(cloaking::zero_tone);
    let strategy = sc.tone.as_ref().map(|t| t.strategy).unwrap_or_default();
    let mut t = Table::new(&format!("{}_tone", sc.name), &["t_ns", "E2_over_2pi_MHz"])
        .meta("strategy", format!("{strategy:?} ({})", tone.strategy.name()))
        .meta("rate_GSps", rate_gsps)
        .meta("omega1_GHz", to_ghz(drive.carrier));
    for (k, v) in &tone.params {
        t.meta.push((format!("param.{k}"), v.to_string()));
    }
    for (x, y) in tone.sample(rate_gsps, t_end) {
        t.push(vec![x, to_mhz(y)]);
    }
    Ok(t)
}
