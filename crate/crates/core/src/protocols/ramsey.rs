// SPDX-License-Identifier: Apache-2.0
//! Ac-Stark shift and measurement-induced dephasing from the dressed qubit
//! coherence under a cavity drive.

use super::{driven_terms, FieldFrame};
use crate::cloaking::CancellationTone;
use crate::hilbert;
use crate::lindblad::{Generator, IntegratorConfig};
use crate::linalg;
use crate::model::{self, BuiltModel, DriveSpec, DriveTerm, SystemSpec, Variant};
use crate::{Error, Result, C64};
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_1_SQRT_2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RamseyConfig {
    /// Drive-on time with the qubit in its dressed ground state before the
    /// superposition is prepared (ns). Zero prepares at t = 0.
    pub t_prep: f64,
    /// Delay from preparation to the start of the fit window (ns).
    pub t_settle: f64,
    pub window: f64,
    /// Sampling interval of the coherence (ns).
    pub dt: f64,
    pub frame: FieldFrame,
    pub integrator: IntegratorConfig,
    /// Largest accepted fit residual relative to the coherence at the start
    /// of the window.
    pub max_residual: f64,
    /// Average out the fast micro-motion at the drive carrier plus and minus
    /// the qubit frequency before fitting.
    #[serde(default = "default_true")]
    pub filter: bool,
}

fn default_true() -> bool {
    true
}

impl RamseyConfig {
    /// Timing scaled by the cavity lifetime.
    pub fn for_kappa(kappa: f64) -> Self {
        RamseyConfig {
            t_prep: 10.0 / kappa,
            t_settle: 2.0 / kappa,
            window: 4.0 / kappa,
            dt: 0.25,
            frame: FieldFrame::Displaced { omega_ref: None },
            integrator: IntegratorConfig::default(),
            max_residual: 0.1,
            filter: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.t_prep >= 0.0 && self.t_settle >= 0.0 && self.window > 0.0 && self.dt > 0.0 && self.window / self.dt >= 4.0 && self.max_residual > 0.0;
        if !ok {
            return Err(Error::InvalidParameter(format!("Ramsey timing {self:?}")));
        }
        self.integrator.validate()
    }

    pub fn t_end(&self) -> f64 {
        self.t_prep + self.t_settle + self.window
    }
}

/// Exponential fit of a demodulated coherence.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoherenceFit {
    /// Frequency offset from the dressed qubit frequency (rad/ns).
    pub omega: f64,
    /// Amplitude decay rate (1/ns).
    pub gamma: f64,
    pub amplitude: f64,
    /// Max deviation over the window relative to the first sample.
    pub residual: f64,
    /// Standard errors of (omega, gamma).
    pub sigma_omega: f64,
    pub sigma_gamma: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RamseyResult {
    /// Ac-Stark shift (rad/ns).
    pub delta_omega: f64,
    /// Excess dephasing rate (1/ns).
    pub delta_gamma: f64,
    pub baseline: CoherenceFit,
    pub driven: CoherenceFit,
    pub residual: f64,
    /// Covariance of (delta_omega, delta_gamma), independent-fit estimate.
    pub covariance: [[f64; 2]; 2],
    pub omega_q: f64,
}

/// Dressed ladder {|g,n>, |e,n>} for all cavity photon numbers whose dressed
/// state can be assigned (other modes in vacuum).
pub fn dressed_ladder(m: &BuiltModel) -> Result<Vec<(Array1<C64>, Array1<C64>)>> {
    let (w, v) = linalg::eigh(m.h_static.matrix())?;
    let dims = m.layout.dims();
    let mut used = vec![false; w.len()];
    let mut pick = |label: &[usize]| -> Option<Array1<C64>> {
        let flat = m.layout.flat_index(label);
        let (k, ov) = (0..w.len()).map(|k| (k, v[[flat, k]].norm_sqr())).fold((0, -1.0), |a, b| if b.1 > a.1 { b } else { a });
        if ov < 0.5 || used[k] {
            return None;
        }
        used[k] = true;
        let col = v.column(k).to_owned();
        let c = col[flat];
        let ph = c.conj() / c.norm();
        Some(col.mapv(|z| z * ph))
    };
    let mut out = Vec::new();
    for n in 0..dims[1] {
        let mut lg = vec![0; dims.len()];
        lg[1] = n;
        let mut le = lg.clone();
        le[0] = 1;
        match (pick(&lg), pick(&le)) {
            (Some(g), Some(e)) => out.push((g, e)),
            _ if n == 0 => return Err(Error::BranchIdentification { label: "[0/1, 0]".into(), overlap: 0.0 }),
            _ => {
                log::debug!("dressed ladder truncated at n = {n}");
                break;
            }
        }
    }
    Ok(out)
}

fn outer(a: &Array1<C64>, b: &Array1<C64>) -> Array2<C64> {
    Array2::from_shape_fn((a.len(), b.len()), |(i, j)| a[i] * b[j].conj())
}

/// Demodulated coherence samples (tau from preparation, value).
pub fn coherence_trace(spec: &SystemSpec, drive: Option<&DriveSpec>, tone: Option<&CancellationTone>, cfg: &RamseyConfig) -> Result<(Vec<f64>, Vec<C64>, f64)> {
    cfg.validate()?;
    let undriven = spec.without_drives();
    if undriven.variant == Variant::TlsRwa && undriven.dims.qubit != 2 {
        return Err(Error::VariantMismatch("two-level qubit expected".into()));
    }
    let m = model::build(&undriven)?;
    let ladder = dressed_ladder(&m)?;
    let dressed = model::dressed_quantities(&undriven)?;
    let wq = dressed.omega_q;
    let n = m.dim();
    let mut extra: Vec<DriveTerm> = Vec::new();
    if let Some(d) = drive {
        extra = driven_terms(spec, d, tone, cfg.frame, cfg.t_end())?.terms;
    }
    let gen = Generator::from_model(&m, &extra, cfg.integrator.frame)?;
    let (g0, _) = &ladder[0];
    let mut rho = outer(g0, g0);
    if cfg.t_prep > 0.0 {
        let mut last = None;
        gen.propagate(&rho, 0.0, &[0.0, cfg.t_prep], &cfg.integrator.ode, |k, _, x| {
            if k == 1 {
                last = Some(linalg::hermitize(x));
            }
            Ok(())
        })?;
        rho = last.ok_or_else(|| Error::IntegrationFailure { t: cfg.t_prep, reason: "no output".into() })?;
    }
    // Instantaneous pi/2 about y in every photon sector.
    let mut r = Array2::<C64>::eye(n);
    let mut coh = Array2::<C64>::zeros((n, n));
    for (g, e) in &ladder {
        let p = FRAC_1_SQRT_2;
        r = r - outer(g, g) - outer(e, e) + (outer(g, g) + outer(e, g) + outer(e, e) - outer(g, e)).mapv(|z| z * p);
        coh = coh + outer(g, e);
    }
    rho = r.dot(&rho).dot(&linalg::dagger(&r));
    let periods = filter_periods(drive, wq, cfg);
    let pad: f64 = 0.5 * periods.iter().sum::<f64>();
    let dt = periods.iter().fold(cfg.dt, |a, &p| a.min(p / 16.0));
    let steps = ((cfg.t_settle + cfg.window + pad) / dt).ceil() as usize;
    let times: Vec<f64> = (0..=steps).map(|k| cfg.t_prep + k as f64 * dt).collect();
    let mut taus = Vec::with_capacity(times.len());
    let mut vals = Vec::with_capacity(times.len());
    gen.propagate(&rho, cfg.t_prep, &times, &cfg.integrator.ode, |_, t, x| {
        let tau = t - cfg.t_prep;
        let c = hilbert::expect_matrix(&coh, x);
        taus.push(tau);
        vals.push(c * C64::from_polar(1.0, wq * tau));
        Ok(())
    })?;
    if periods.is_empty() {
        return Ok((taus, vals, wq));
    }
    let (mut t, mut v) = (taus, vals);
    for p in &periods {
        (t, v) = boxcar(&t, &v, *p);
    }
    let n = ((cfg.t_settle + cfg.window) / cfg.dt).round() as usize;
    let coarse: Vec<f64> = (0..=n).map(|k| k as f64 * cfg.dt).filter(|&x| x >= t[0] - 1e-12 && x <= t[t.len() - 1] + 1e-12).collect();
    let vals = coarse.iter().map(|&x| interp(&t, &v, x)).collect();
    Ok((coarse, vals, wq))
}

/// Boxcar periods 2 pi / |w1 -+ wq| for a drive, empty without one.
fn filter_periods(drive: Option<&DriveSpec>, wq: f64, cfg: &RamseyConfig) -> Vec<f64> {
    match drive {
        Some(d) if cfg.filter && d.carrier > 0.0 && !d.envelope.is_zero() => [d.carrier - wq, d.carrier + wq]
            .iter()
            .filter(|w| w.abs() * cfg.window > 2.0 * std::f64::consts::TAU)
            .map(|w| std::f64::consts::TAU / w.abs())
            .collect(),
        _ => Vec::new(),
    }
}

fn interp(t: &[f64], v: &[C64], x: f64) -> C64 {
    let h = t[1] - t[0];
    let k = (((x - t[0]) / h).floor().max(0.0) as usize).min(t.len() - 2);
    let f = (x - t[k]) / h;
    v[k] * (1.0 - f) + v[k + 1] * f
}

/// Centered moving average of width `width` on a uniform grid, defined where
/// the full window fits.
pub fn boxcar(t: &[f64], v: &[C64], width: f64) -> (Vec<f64>, Vec<C64>) {
    let h = t[1] - t[0];
    let mut cum = vec![C64::new(0.0, 0.0); v.len()];
    for k in 1..v.len() {
        cum[k] = cum[k - 1] + (v[k] + v[k - 1]) * (0.5 * h);
    }
    let half = 0.5 * width;
    let (mut to, mut vo) = (Vec::new(), Vec::new());
    for &x in t {
        if x - half < t[0] || x + half > t[t.len() - 1] {
            continue;
        }
        to.push(x);
        vo.push((interp(t, &cum, x + half) - interp(t, &cum, x - half)) / width);
    }
    (to, vo)
}

fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let ss: f64 = x.iter().zip(y).map(|(a, b)| (b - icpt - slope * a).powi(2)).sum();
    let var = if n > 2.0 { ss / (n - 2.0) / sxx } else { f64::INFINITY };
    (slope, icpt, var.sqrt())
}

/// Fits c = A exp(-i omega tau - gamma tau) on tau >= tau0.
pub fn fit_coherence(taus: &[f64], vals: &[C64], tau0: f64, max_residual: f64) -> Result<CoherenceFit> {
    let idx: Vec<usize> = (0..taus.len()).filter(|&k| taus[k] >= tau0 - 1e-9).collect();
    if idx.len() < 4 {
        return Err(Error::InvalidParameter("fewer than 4 samples in the fit window".into()));
    }
    let x: Vec<f64> = idx.iter().map(|&k| taus[k]).collect();
    if idx.iter().any(|&k| vals[k].norm() == 0.0 || !vals[k].norm().is_finite()) {
        return Err(Error::FitFailed(f64::INFINITY));
    }
    let lnabs: Vec<f64> = idx.iter().map(|&k| vals[k].norm().ln()).collect();
    let mut phase = Vec::with_capacity(idx.len());
    let mut prev = vals[idx[0]].arg();
    let mut acc = prev;
    for &k in &idx {
        let a = vals[k].arg();
        let mut d = a - prev;
        d -= (d / std::f64::consts::TAU).round() * std::f64::consts::TAU;
        acc += d;
        prev = a;
        phase.push(acc);
    }
    let (sg, ig, eg) = linear_fit(&x, &lnabs);
    let (sp, ip, ep) = linear_fit(&x, &phase);
    let c0 = vals[idx[0]].norm();
    let residual = idx
        .iter()
        .zip(&x)
        .map(|(&k, &t)| (vals[k] - C64::from_polar((ig + sg * t).exp(), ip + sp * t)).norm())
        .fold(0.0, f64::max)
        / c0;
    if !(residual <= max_residual) {
        return Err(Error::FitFailed(residual));
    }
    Ok(CoherenceFit { omega: -sp, gamma: -sg, amplitude: ig.exp(), residual, sigma_omega: ep, sigma_gamma: eg })
}

/// Zero-drive reference fit.
pub fn ramsey_baseline(spec: &SystemSpec, cfg: &RamseyConfig) -> Result<CoherenceFit> {
    let (t, c, _) = coherence_trace(spec, None, None, cfg)?;
    fit_coherence(&t, &c, cfg.t_settle, cfg.max_residual)
}

/// Shift and dephasing relative to a precomputed baseline.
pub fn ramsey_with_baseline(spec: &SystemSpec, drive: Option<&DriveSpec>, tone: Option<&CancellationTone>, baseline: &CoherenceFit, cfg: &RamseyConfig) -> Result<RamseyResult> {
    let (t, c, wq) = coherence_trace(spec, drive, tone, cfg)?;
    let f = fit_coherence(&t, &c, cfg.t_settle, cfg.max_residual)?;
    let vo = f.sigma_omega.powi(2) + baseline.sigma_omega.powi(2);
    let vg = f.sigma_gamma.powi(2) + baseline.sigma_gamma.powi(2);
    Ok(RamseyResult {
        delta_omega: f.omega - baseline.omega,
        delta_gamma: f.gamma - baseline.gamma,
        baseline: *baseline,
        driven: f,
        residual: f.residual.max(baseline.residual),
        covariance: [[vo, 0.0], [0.0, vg]],
        omega_q: wq + baseline.omega,
    })
}

pub fn ramsey_extract(spec: &SystemSpec, drive: Option<&DriveSpec>, tone: Option<&CancellationTone>, cfg: &RamseyConfig) -> Result<RamseyResult> {
    let base = ramsey_baseline(spec, cfg)?;
    ramsey_with_baseline(spec, drive, tone, &base, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DissipationSpec, Port, Waveform};
    use crate::units::{ghz, mhz};

    #[test]
    fn fit_recovers_exponential() {
        let t: Vec<f64> = (0..200).map(|k| k as f64 * 0.5).collect();
        let c: Vec<C64> = t.iter().map(|&x| C64::from_polar(0.7 * (-0.013 * x).exp(), 0.3 - 0.21 * x)).collect();
        let f = fit_coherence(&t, &c, 10.0, 0.1).unwrap();
        assert!((f.omega - 0.21).abs() < 1e-10 && (f.gamma - 0.013).abs() < 1e-10 && f.residual < 1e-10);
        let noisy: Vec<C64> = c.iter().enumerate().map(|(k, z)| if k % 2 == 0 { z * 1.5 } else { *z }).collect();
        assert!(matches!(fit_coherence(&t, &noisy, 10.0, 0.1), Err(Error::FitFailed(_))));
    }

    #[test]
    fn zero_drive_is_zero_shift() {
        let spec = SystemSpec::tls_rwa(ghz(5.7), ghz(7.6), mhz(200.0), 4, DissipationSpec::cavity(mhz(50.0)));
        let mut cfg = RamseyConfig::for_kappa(mhz(50.0));
        cfg.frame = FieldFrame::Lab;
        let d = DriveSpec { waveform: Waveform::ComplexRwa, ..DriveSpec::sine(Port::Cavity, 0.0, ghz(7.6), 0.0) };
        let r = ramsey_extract(&spec, Some(&d), None, &cfg).unwrap();
        assert!(r.delta_omega.abs() < 1e-9 && r.delta_gamma.abs() < 1e-9, "{r:?}");
        // Purcell-limited dressed decay, amplitude rate half the energy rate.
        assert!(r.baseline.gamma > 0.0);
    }
}
