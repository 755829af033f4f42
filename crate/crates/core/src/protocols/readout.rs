// SPDX-License-Identifier: Apache-2.0
//! Semiclassical pointer-state dynamics for dispersive and arm-and-release
//! readout, with Gaussian and Monte-Carlo discrimination statistics.
//!
//! Pointer amplitudes live in the frame rotating at the drive frequency w1:
//!   a_i' = -(i (w_i - w1) + k/2) a_i + i (eps/2) e^{i phi},
//! whose steady state is (eps/2) e^{i phi} / (w_i - w1 - i k/2).

use crate::model::DressedData;
use crate::ode::{self, OdeConfig};
use crate::{Error, Result, C64};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

/// Cavity frequencies seen by each qubit state, and the bare one.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DispersiveParams {
    pub omega_r_bare: f64,
    /// w~_r + chi_g
    pub omega_g: f64,
    /// w~_r + chi_e
    pub omega_e: f64,
    pub kappa: f64,
}

impl DispersiveParams {
    pub fn from_dressed(d: &DressedData, omega_r_bare: f64, kappa: f64) -> Self {
        DispersiveParams { omega_r_bare, omega_g: d.omega_r + d.chi_g, omega_e: d.omega_r + d.chi_e, kappa }
    }

    pub fn omega_ro(&self) -> f64 {
        0.5 * (self.omega_g + self.omega_e)
    }

    fn branch(&self, excited: bool) -> f64 {
        if excited {
            self.omega_e
        } else {
            self.omega_g
        }
    }
}

/// Constant drive in the rotating frame: amplitude eps, phase phi.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReadoutDrive {
    pub eps: f64,
    pub phi: f64,
}

impl ReadoutDrive {
    fn forcing(&self) -> C64 {
        C64::new(0.0, 0.5 * self.eps) * C64::from_polar(1.0, self.phi)
    }
}

pub fn steady_state(omega: f64, omega1: f64, kappa: f64, d: &ReadoutDrive) -> C64 {
    C64::from_polar(0.5 * d.eps, d.phi) / C64::new(omega - omega1, -0.5 * kappa)
}

pub fn steady_release(p: &DispersiveParams, excited: bool, omega1: f64, d: &ReadoutDrive) -> C64 {
    steady_state(p.branch(excited), omega1, p.kappa, d)
}

/// Arming drive that places the cloaked field on the branch-averaged release
/// steady state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmingPlan {
    /// |a_arm^s| / |a_release^s| at equal drive.
    pub ratio: f64,
    /// arg a_arm^s - mean arg a_release^s (rad).
    pub phase: f64,
    pub arm: ReadoutDrive,
}

fn wrap(x: f64) -> f64 {
    let t = std::f64::consts::TAU;
    x - (x / t).round() * t
}

pub fn arming_optimization(p: &DispersiveParams, omega1: f64, release: &ReadoutDrive) -> ArmingPlan {
    let unit = ReadoutDrive { eps: 1.0, phi: 0.0 };
    let a = steady_state(p.omega_r_bare, omega1, p.kappa, &unit);
    let (g, e) = (steady_release(p, false, omega1, &unit), steady_release(p, true, omega1, &unit));
    let mag = 0.5 * (g.norm() + e.norm());
    let ph = g.arg() + 0.5 * wrap(e.arg() - g.arg());
    let ratio = a.norm() / mag;
    let phase = wrap(a.arg() - ph);
    ArmingPlan { ratio, phase, arm: ReadoutDrive { eps: release.eps / ratio, phi: release.phi - phase } }
}

/// Pointer trajectories after release (t = 0 is the release instant).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReadoutResult {
    pub times: Vec<f64>,
    pub alpha_g: Vec<C64>,
    pub alpha_e: Vec<C64>,
    /// sqrt(2 int_0^t Gamma_m), Gamma_m = k |a_g - a_e|^2 / 2
    pub snr: Vec<f64>,
    /// Integrated-signal means, (1/t) int_0^t a_i.
    pub mean_g: Vec<C64>,
    pub mean_e: Vec<C64>,
    /// Arming segment on [-t_arm, 0]: (t, alpha_g, alpha_e).
    pub arming: Vec<(f64, C64, C64)>,
    pub kappa: f64,
    pub eta: f64,
    /// Per-sample Gaussian-model statistics (index matches `times`).
    pub overlap: Vec<f64>,
    pub p_g_given_e: Vec<f64>,
    pub p_e_given_g: Vec<f64>,
    pub fidelity: Vec<f64>,
    /// Decision threshold on the projected axis (midpoint of the means).
    pub q_th: f64,
}

impl ReadoutResult {
    /// Index of the first sample at or after t.
    pub fn index_at(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|&x| x >= t - 1e-12)
    }
}

/// Gaussian-model noise standard deviation per quadrature.
pub fn noise_sigma(kappa: f64, t_int: f64, eta: f64) -> f64 {
    (1.0 / (2.0 * kappa * t_int * eta)).sqrt()
}

/// (overlap, P(e|g), P(g|e)) for two circular Gaussians.
pub fn gaussian_statistics(mean_g: C64, mean_e: C64, sigma: f64) -> (f64, f64, f64) {
    let d = (mean_e - mean_g).norm();
    let o = (-d * d / (4.0 * sigma * sigma)).exp();
    let p = 0.5 * erfc(d / (2.0 * std::f64::consts::SQRT_2 * sigma));
    (o, p, p)
}

/// Integrates [a_g, a_e, S, I_g, I_e] with S' = k|a_g - a_e|^2, I_i' = a_i.
fn integrate_segment(p: &DispersiveParams, omega1: f64, d: &ReadoutDrive, cloaked: bool, y0: [C64; 2], times: &[f64]) -> Result<Vec<(f64, [C64; 5])>> {
    let (dg, de) = if cloaked { (p.omega_r_bare - omega1, p.omega_r_bare - omega1) } else { (p.omega_g - omega1, p.omega_e - omega1) };
    let f = d.forcing();
    let k2 = 0.5 * p.kappa;
    let kappa = p.kappa;
    let mut rhs = |_t: f64, y: &[C64], dy: &mut [C64]| {
        dy[0] = -C64::new(k2, dg) * y[0] + f;
        dy[1] = -C64::new(k2, de) * y[1] + f;
        dy[2] = C64::new(kappa * (y[0] - y[1]).norm_sqr(), 0.0);
        dy[3] = y[0];
        dy[4] = y[1];
    };
    let z = C64::default();
    let mut out = Vec::with_capacity(times.len());
    ode::integrate(&mut rhs, &[y0[0], y0[1], z, z, z], times[0], times, &OdeConfig::adaptive(1e-12, 1e-14), |_, t, y| {
        out.push((t, [y[0], y[1], y[2], y[3], y[4]]));
        Ok(())
    })?;
    Ok(out)
}

/// Arms under cloaking for `t_arm` with `arm` (None: start from vacuum), then
/// releases with `release` and samples on `times` (>= 0, starting at 0).
pub fn arm_and_release(p: &DispersiveParams, omega1: f64, arm: Option<&ReadoutDrive>, t_arm: f64, release: &ReadoutDrive, times: &[f64], eta: f64) -> Result<ReadoutResult> {
    if times.is_empty() || times[0] != 0.0 || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("release times must start at 0 and increase".into()));
    }
    if !(eta > 0.0 && eta <= 1.0) || !(p.kappa > 0.0) {
        return Err(Error::InvalidParameter("need 0 < eta <= 1 and kappa > 0".into()));
    }
    let mut arming = Vec::new();
    let mut y0 = [C64::default(); 2];
    if let Some(a) = arm {
        if t_arm > 0.0 {
            let n = 200;
            let ts: Vec<f64> = (0..=n).map(|k| -t_arm + t_arm * k as f64 / n as f64).collect();
            let seg = integrate_segment(p, omega1, a, true, y0, &ts)?;
            arming = seg.iter().map(|(t, y)| (*t, y[0], y[1])).collect();
            let last = seg.last().unwrap().1;
            y0 = [last[0], last[1]];
        }
    }
    let seg = integrate_segment(p, omega1, release, false, y0, times)?;
    let mut r = ReadoutResult {
        times: times.to_vec(),
        alpha_g: seg.iter().map(|x| x.1[0]).collect(),
        alpha_e: seg.iter().map(|x| x.1[1]).collect(),
        snr: seg.iter().map(|x| x.1[2].re.max(0.0).sqrt()).collect(),
        mean_g: Vec::new(),
        mean_e: Vec::new(),
        arming,
        kappa: p.kappa,
        eta,
        overlap: Vec::new(),
        p_g_given_e: Vec::new(),
        p_e_given_g: Vec::new(),
        fidelity: Vec::new(),
        q_th: 0.0,
    };
    for (k, (t, y)) in seg.iter().enumerate() {
        let (mg, me) = if *t > 0.0 { (y[3] / *t, y[4] / *t) } else { (r.alpha_g[k], r.alpha_e[k]) };
        r.mean_g.push(mg);
        r.mean_e.push(me);
        let (o, peg, pge) = if *t > 0.0 { gaussian_statistics(mg, me, noise_sigma(p.kappa, *t, eta)) } else { (1.0, 0.5, 0.5) };
        r.overlap.push(o);
        r.p_e_given_g.push(peg);
        r.p_g_given_e.push(pge);
        r.fidelity.push(1.0 - 0.5 * (peg + pge));
    }
    Ok(r)
}

/// Additive error from relaxation during integration, (1/2)(1 - e^{-t/2T1}).
pub fn relaxation_error(t_int: f64, t1: f64) -> f64 {
    0.5 * (1.0 - (-t_int / (2.0 * t1)).exp())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HistogramResult {
    pub t_int: f64,
    pub n_shots: usize,
    pub sigma: f64,
    pub overlap_histogram: f64,
    pub overlap_theory: f64,
    pub p_e_given_g: f64,
    pub p_g_given_e: f64,
    pub p_e_given_g_theory: f64,
    pub fidelity: f64,
    /// Threshold on the axis through the two means, measured from the midpoint.
    pub q_th: f64,
    pub bins: usize,
    pub warnings: Vec<String>,
}

/// Synthetic single-shot statistics at the sample nearest `t_int`.
pub fn readout_histograms(r: &ReadoutResult, t_int: f64, n_shots: usize, bins: usize, seed: u64) -> Result<HistogramResult> {
    let k = r.index_at(t_int).ok_or_else(|| Error::InvalidParameter(format!("t_int = {t_int} beyond the trajectory")))?;
    let t = r.times[k];
    if t <= 0.0 {
        return Err(Error::InvalidParameter("t_int must be > 0".into()));
    }
    if bins < 2 || n_shots == 0 {
        return Err(Error::InvalidParameter("need bins >= 2 and n_shots > 0".into()));
    }
    let mut warnings = Vec::new();
    if n_shots < 1000 {
        let w = format!("n_shots = {n_shots} < 1000: statistics are noisy");
        log::warn!("{w}");
        warnings.push(w);
    }
    let sigma = noise_sigma(r.kappa, t, r.eta);
    let (mg, me) = (r.mean_g[k], r.mean_e[k]);
    let sep = me - mg;
    let axis = if sep.norm() > 0.0 { sep / sep.norm() } else { C64::new(1.0, 0.0) };
    let mid = 0.5 * (mg + me);
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |m: C64| -> Vec<C64> { (0..n_shots).map(|_| m + C64::new(normal.sample(&mut rng), normal.sample(&mut rng))).collect() };
    let sg = draw(mg);
    let se = draw(me);
    let q = |s: &C64| ((s - mid) * axis.conj()).re;
    let q_th = 0.0;
    let peg = sg.iter().filter(|s| q(s) > q_th).count() as f64 / n_shots as f64;
    let pge = se.iter().filter(|s| q(s) <= q_th).count() as f64 / n_shots as f64;
    // Common square box covering both clouds.
    let half = 0.5 * sep.norm() + 5.0 * sigma;
    let lo = mid - C64::new(half, half);
    let w = 2.0 * half / bins as f64;
    let hist = |s: &[C64]| -> Vec<f64> {
        let mut h = vec![0.0; bins * bins];
        for z in s {
            let i = ((z.re - lo.re) / w).floor();
            let j = ((z.im - lo.im) / w).floor();
            if i >= 0.0 && j >= 0.0 && (i as usize) < bins && (j as usize) < bins {
                h[i as usize * bins + j as usize] += 1.0;
            }
        }
        h
    };
    let (hg, he) = (hist(&sg), hist(&se));
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let overlap_histogram = (dot(&hg, &he) / (dot(&hg, &hg) * dot(&he, &he)).sqrt()).clamp(0.0, 1.0);
    let (ot, pt, _) = gaussian_statistics(mg, me, sigma);
    Ok(HistogramResult {
        t_int: t,
        n_shots,
        sigma,
        overlap_histogram,
        overlap_theory: ot,
        p_e_given_g: peg,
        p_g_given_e: pge,
        p_e_given_g_theory: pt,
        fidelity: 1.0 - 0.5 * (peg + pge),
        q_th,
        bins,
        warnings,
    })
}
