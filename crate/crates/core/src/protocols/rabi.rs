// SPDX-License-Identifier: Apache-2.0
//! Resonant vacuum Rabi oscillations of the two-level model.

use super::{driven_terms, FieldFrame};
use crate::hilbert::DensityState;
use crate::lindblad::{Generator, IntegratorConfig};
use crate::model::{self, DriveSpec, SystemSpec, Variant, CAVITY};
use crate::observables::{self, WignerGrid};
use crate::{Error, Result};
use std::f64::consts::PI;

#[derive(Clone, Debug)]
pub struct WignerSnapshot {
    /// Time in units of the Rabi period pi/g'.
    pub periods: f64,
    pub time: f64,
    pub grid: WignerGrid,
}

#[derive(Clone, Debug)]
pub struct RabiResult {
    pub times: Vec<f64>,
    pub p_e_undriven: Vec<f64>,
    pub n_undriven: Vec<f64>,
    /// Driven run; equal to the undriven traces when no drive is given.
    pub p_e: Vec<f64>,
    pub n_cavity: Vec<f64>,
    pub alpha_sq: Vec<f64>,
    /// Driven-run states at the snapshot times (lab frame).
    pub snapshot_states: Vec<DensityState>,
    pub snapshots: Vec<WignerSnapshot>,
    pub rabi_period: f64,
}

#[derive(Clone, Debug)]
pub struct RabiConfig {
    pub horizon: f64,
    pub n_times: usize,
    pub snapshot_periods: Vec<f64>,
    pub wigner_re: Vec<f64>,
    pub wigner_im: Vec<f64>,
    pub integrator: IntegratorConfig,
}

/// Runs the undriven reference and, with `drive`, the driven run (with the
/// exact tone if `cancel`). Starts in |e,0>.
pub fn vacuum_rabi(spec: &SystemSpec, drive: Option<&DriveSpec>, cancel: bool, cfg: &RabiConfig) -> Result<RabiResult> {
    if spec.variant != Variant::TlsRwa {
        return Err(Error::VariantMismatch("vacuum Rabi protocol uses the two-level model".into()));
    }
    let wq = spec.omega_q.unwrap_or(spec.omega_r);
    if (wq - spec.omega_r).abs() > 1e-9 * spec.omega_r.abs().max(1.0) {
        return Err(Error::InvalidParameter("vacuum Rabi needs omega_q = omega_r".into()));
    }
    if cfg.n_times < 2 || !(cfg.horizon > 0.0) {
        return Err(Error::InvalidParameter("need horizon > 0 and >= 2 samples".into()));
    }
    let period = PI / spec.g;
    let mut times: Vec<f64> = (0..cfg.n_times).map(|k| cfg.horizon * k as f64 / (cfg.n_times - 1) as f64).collect();
    let snap_t: Vec<f64> = cfg.snapshot_periods.iter().map(|p| p * period).collect();
    if snap_t.iter().any(|&t| t < 0.0 || t > cfg.horizon) {
        return Err(Error::InvalidParameter("snapshot beyond horizon".into()));
    }
    times.extend(&snap_t);
    times.sort_by(f64::total_cmp);
    times.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let undriven = spec.without_drives();
    let m = model::build(&undriven)?;
    let rho0 = DensityState::basis(&m.layout, &[1, 0])?;
    let pe_op = m.qubit_projector(1)?;
    let n_op = m.cavity_number();
    let run = |extra: &[model::DriveTerm], want: &[f64]| -> Result<(Vec<f64>, Vec<f64>, Vec<DensityState>)> {
        let gen = Generator::from_model(&m, extra, cfg.integrator.frame)?;
        let (mut pe, mut nc, mut st) = (Vec::new(), Vec::new(), Vec::new());
        gen.propagate(rho0.matrix(), 0.0, &times, &cfg.integrator.ode, |_, t, x| {
            pe.push(crate::hilbert::expect_matrix(pe_op.matrix(), x).re);
            nc.push(crate::hilbert::expect_matrix(n_op.matrix(), x).re);
            if want.iter().any(|&s| (s - t).abs() < 1e-12) {
                st.push(DensityState::from_raw(m.layout.clone(), x.clone())?);
            }
            Ok(())
        })?;
        Ok((pe, nc, st))
    };
    let (p0, n0, s0) = run(&[], if drive.is_none() { &snap_t } else { &[] })?;
    let (p_e, n_cavity, states, alpha_sq) = match drive {
        Some(d) => {
            let field = super::classical_field(spec, d, cfg.horizon)?;
            let tone = if cancel { Some(super::exact_tone_for(spec, &field)?) } else { None };
            let dt = driven_terms(spec, d, tone.as_ref(), FieldFrame::Lab, cfg.horizon)?;
            let (p, n, s) = run(&dt.terms, &snap_t)?;
            let a2 = times.iter().map(|&t| dt.field.alpha(t).norm_sqr()).collect();
            (p, n, s, a2)
        }
        None => (p0.clone(), n0.clone(), s0, vec![0.0; times.len()]),
    };
    let mut snapshots = Vec::new();
    for ((&p, &t), s) in cfg.snapshot_periods.iter().zip(&snap_t).zip(&states) {
        let cav = s.partial_trace(CAVITY)?;
        snapshots.push(WignerSnapshot { periods: p, time: t, grid: observables::wigner(&cav, &cfg.wigner_re, &cfg.wigner_im)? });
    }
    Ok(RabiResult { times, p_e_undriven: p0, n_undriven: n0, p_e, n_cavity, alpha_sq, snapshot_states: states, snapshots, rabi_period: period })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DissipationSpec;

    #[test]
    fn lossless_full_contrast() {
        let gp = 0.5;
        let spec = SystemSpec::tls_rwa(30.0, 30.0, gp, 3, DissipationSpec::default());
        let cfg = RabiConfig {
            horizon: 2.0 * PI / gp,
            n_times: 41,
            snapshot_periods: vec![],
            wigner_re: vec![],
            wigner_im: vec![],
            integrator: IntegratorConfig::default(),
        };
        let r = vacuum_rabi(&spec, None, false, &cfg).unwrap();
        for (t, p) in r.times.iter().zip(&r.p_e) {
            assert!((p - (gp * t).cos().powi(2)).abs() < 1e-7);
        }
        let half = r.times.iter().position(|&t| (t - r.rabi_period / 2.0).abs() < 1e-9).unwrap();
        assert!((r.n_cavity[half] - 1.0).abs() < 1e-7);
    }
}
