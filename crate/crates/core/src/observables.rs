// SPDX-License-Identifier: Apache-2.0
//! Wigner functions, absorption spectra, photon numbers and Bloch vectors.

use crate::hilbert::{self, DensityState, Operator};
use crate::lindblad::{self, FrameChoice, Generator};
use crate::linalg::{self, ZERO};
use crate::model::{self, SystemSpec, Variant, CAVITY, QUBIT};
use crate::ode::OdeConfig;
use crate::{Error, Result, C64};
use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// W(alpha) = (2/pi) Tr[D^dag(alpha) rho D(alpha) P], P the parity.
/// `values[[i, j]]` is W at (x = re[j], y = im[i]).
#[derive(Clone, Debug)]
pub struct WignerGrid {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
    pub values: Array2<f64>,
}

impl WignerGrid {
    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// (re, im) of the smallest value.
    pub fn argmin(&self) -> (f64, f64) {
        let mut best = (f64::INFINITY, 0, 0);
        for ((i, j), &v) in self.values.indexed_iter() {
            if v < best.0 {
                best = (v, i, j);
            }
        }
        (self.re[best.2], self.im[best.1])
    }

    /// Riemann sum over the grid; uniform spacing assumed.
    pub fn integral(&self) -> f64 {
        let dx = if self.re.len() > 1 { self.re[1] - self.re[0] } else { 1.0 };
        let dy = if self.im.len() > 1 { self.im[1] - self.im[0] } else { 1.0 };
        self.values.sum() * dx * dy
    }
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
}

/// Generalized Laguerre L_k^{(a)}(x) for k = 0..=kmax.
fn laguerre_all(kmax: usize, a: f64, x: f64) -> Vec<f64> {
    let mut out = vec![1.0; kmax + 1];
    if kmax >= 1 {
        out[1] = 1.0 + a - x;
    }
    for k in 1..kmax {
        let kf = k as f64;
        out[k + 1] = ((2.0 * kf + 1.0 + a - x) * out[k] - (kf + a) * out[k - 1]) / (kf + 1.0);
    }
    out
}

/// Matrix elements <n|D(beta)|m> of the untruncated displacement operator.
pub fn displacement_elements(dim: usize, beta: C64) -> Array2<C64> {
    let x = beta.norm_sqr();
    let pre = (-0.5 * x).exp();
    let mut d = Array2::from_elem((dim, dim), ZERO);
    // ln k!
    let mut lf = vec![0.0; dim];
    for k in 1..dim {
        lf[k] = lf[k - 1] + (k as f64).ln();
    }
    for s in 0..dim {
        // s = |n - m|; L_{min}^{(s)}
        let lag = laguerre_all(dim - 1 - s, s as f64, x);
        let pw_pos = beta.powu(s as u32);
        let pw_neg = (-beta.conj()).powu(s as u32);
        for lo in 0..dim - s {
            let hi = lo + s;
            let r = (0.5 * (lf[lo] - lf[hi])).exp() * pre * lag[lo];
            d[[hi, lo]] = pw_pos * r;
            if s > 0 {
                d[[lo, hi]] = pw_neg * r;
            }
        }
    }
    d
}

/// Wigner function of a single bosonic mode on the re x im grid.
pub fn wigner(rho: &DensityState, re: &[f64], im: &[f64]) -> Result<WignerGrid> {
    if rho.layout().dims().len() != 1 {
        return Err(Error::InvalidState("wigner needs a single-mode state; take a partial trace first".into()));
    }
    let d = rho.dim();
    let n = hilbert::number(d)?;
    let nbar = n.expect(rho).re.max(0.0);
    let reach = re.iter().chain(im).fold(0.0f64, |m, v| m.max(v.abs()));
    if nbar.sqrt() + 2.0 > reach {
        log::warn!("state support (|alpha| ~ {:.2}) may exceed the Wigner grid (reach {reach:.2})", nbar.sqrt());
    }
    let r = rho.matrix();
    let rows: Vec<Vec<f64>> = im
        .par_iter()
        .map(|&y| {
            re.iter()
                .map(|&x| {
                    let dm = displacement_elements(d, C64::new(2.0 * x, 2.0 * y));
                    let mut s = ZERO;
                    for m in 0..d {
                        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                        for k in 0..d {
                            s += r[[m, k]] * dm[[k, m]] * sign;
                        }
                    }
                    2.0 / PI * s.re
                })
                .collect()
        })
        .collect();
    let mut values = Array2::zeros((im.len(), re.len()));
    for (i, row) in rows.into_iter().enumerate() {
        for (j, v) in row.into_iter().enumerate() {
            values[[i, j]] = v;
        }
    }
    Ok(WignerGrid { re: re.to_vec(), im: im.to_vec(), values })
}

/// Mean photon number of the factor `label`.
pub fn photon_number(state: &DensityState, label: &str) -> Result<f64> {
    let d = state.layout().factor_dim(label)?;
    Ok(hilbert::embed(&hilbert::number(d)?, state.layout(), label)?.expect(state).re)
}

/// (<sigma_x>, <sigma_y>, <sigma_z>) of the two-level subspace spanned by
/// kets `g` and `e`, with sigma_z = |e><e| - |g><g|.
pub fn bloch_vector(rho: &Array2<C64>, g: &Array1<C64>, e: &Array1<C64>) -> [f64; 3] {
    let rg = rho.dot(g);
    let re = rho.dot(e);
    let gg: C64 = g.iter().zip(rg.iter()).map(|(a, b)| a.conj() * b).sum();
    let ee: C64 = e.iter().zip(re.iter()).map(|(a, b)| a.conj() * b).sum();
    let ge: C64 = g.iter().zip(re.iter()).map(|(a, b)| a.conj() * b).sum();
    [2.0 * ge.re, -2.0 * ge.im, ee.re - gg.re]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumDrive {
    /// Cavity drive amplitude eps1 (rad/ns), complex-RWA convention.
    pub eps1: f64,
    pub omega1: f64,
    pub phi1: f64,
    /// Apply the exact steady-state cancellation tone.
    pub cancel: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Spectrum {
    pub omega: Vec<f64>,
    pub values: Vec<f64>,
    /// Weight of non-decaying (elastic) components, excluded from `values`.
    pub coherent_weight: f64,
    /// <sigma- sigma+>_s
    pub total_weight: f64,
    /// Slowest decay rate among contributing modes.
    pub slowest_decay: f64,
    /// Max deviation between the spectral reconstruction of the correlator
    /// and direct quantum-regression integration over a short window.
    pub regression_check: f64,
}

impl Spectrum {
    pub fn peak(&self) -> (f64, f64) {
        let (k, v) = self.values.iter().enumerate().fold((0, f64::NEG_INFINITY), |b, (k, &v)| if v > b.1 { (k, v) } else { b });
        if k == 0 || k + 1 == self.values.len() {
            return (self.omega[k], v);
        }
        let (a, b, c) = (self.values[k - 1], v, self.values[k + 1]);
        let den = a - 2.0 * b + c;
        let off = if den != 0.0 { 0.5 * (a - c) / den } else { 0.0 };
        let h = self.omega[k + 1] - self.omega[k];
        (self.omega[k] + off * h, b - 0.25 * (a - c) * off)
    }

    /// Full width at half maximum by linear interpolation around the peak.
    pub fn fwhm(&self) -> Option<f64> {
        let (k, v) = self.values.iter().enumerate().fold((0, f64::NEG_INFINITY), |b, (k, &v)| if v > b.1 { (k, v) } else { b });
        let half = 0.5 * v;
        let mut lo = None;
        for i in (0..k).rev() {
            if self.values[i] < half {
                let f = (half - self.values[i]) / (self.values[i + 1] - self.values[i]);
                lo = Some(self.omega[i] + f * (self.omega[i + 1] - self.omega[i]));
                break;
            }
        }
        let mut hi = None;
        for i in k + 1..self.values.len() {
            if self.values[i] < half {
                let f = (self.values[i - 1] - half) / (self.values[i - 1] - self.values[i]);
                hi = Some(self.omega[i - 1] + f * (self.omega[i] - self.omega[i - 1]));
                break;
            }
        }
        Some(hi? - lo?)
    }

    /// Trapezoidal integral of `values`.
    pub fn integral(&self) -> f64 {
        self.omega.windows(2).zip(self.values.windows(2)).map(|(w, v)| 0.5 * (w[1] - w[0]) * (v[0] + v[1])).sum()
    }
}

/// Rotating-frame Hamiltonian and collapse operators of the two-level model
/// with an optional cavity drive and exact steady-state cancellation.
pub fn rotating_tls(spec: &SystemSpec, drive: Option<&SpectrumDrive>, frame_freq: f64) -> Result<(Operator, Vec<Operator>)> {
    if spec.variant != Variant::TlsRwa {
        return Err(Error::VariantMismatch(format!("{:?} spectrum needs the two-level model", spec.variant)));
    }
    let omega_q = spec.omega_q.ok_or_else(|| Error::InvalidParameter("omega_q missing".into()))?;
    let mut rot = spec.without_drives();
    rot.omega_q = Some(omega_q - frame_freq);
    rot.omega_r = spec.omega_r - frame_freq;
    let m = model::build(&rot)?;
    let mut h = m.h_static.clone();
    if let Some(d) = drive {
        let f = C64::new(0.0, 0.5 * d.eps1) * C64::from_polar(1.0, -d.phi1);
        let a = &m.cavity_a;
        // i(F a^dag - F^* a)
        h = &h + &(&a.adjoint().scale(f) - &a.scale(f.conj())).scale(C64::new(0.0, 1.0));
        if d.cancel {
            let z = C64::new(0.5 * spec.dissipation.kappa, spec.omega_r - frame_freq);
            let alpha = f / z;
            // -g'(alpha sigma+ + h.c.)
            let sp = &m.qubit_drive_op;
            h = &h - &(&sp.scale(alpha) + &sp.adjoint().scale(alpha.conj())).scale_re(spec.g);
        }
    }
    Ok((h, m.collapse))
}

/// S(w) = (1/2pi) Int e^{iwt} <sigma-(t) sigma+(0)>_s dt on the lab-frequency
/// grid `omega`, for the two-level model. The correlator is obtained by
/// quantum regression in the frame rotating at the drive frequency (or at
/// omega_r without drive) and transformed exactly through the spectral
/// decomposition of the Liouvillian.
pub fn absorption_spectrum(spec: &SystemSpec, drive: Option<&SpectrumDrive>, omega: &[f64]) -> Result<Spectrum> {
    let frame = drive.map(|d| d.omega1).unwrap_or(spec.omega_r);
    let (h, collapse) = rotating_tls(spec, drive, frame)?;
    let layout = h.layout().clone();
    let steady = lindblad::steady_state(&h, &collapse)?;
    let sm = hilbert::embed(&hilbert::qubit::sigma_minus(), &layout, QUBIT)?;
    let sp = sm.adjoint();
    let n = h.dim();
    let l = lindblad::liouvillian(&h, &collapse)?;
    let (lam, v) = linalg::eig(&l.mat)?;
    let x0 = sp.matrix().dot(steady.matrix());
    let x0v = Array1::from_iter(x0.iter().copied());
    let coef = linalg::solve(&v, &x0v)?;
    // Tr[A X] for row-major vec(X): sum_{ij} A_ji X_ij
    let a = sm.matrix();
    let mut w = Vec::with_capacity(n * n);
    for k in 0..n * n {
        let mut s = ZERO;
        for i in 0..n {
            for j in 0..n {
                let x = v[[i * n + j, k]];
                if x != ZERO {
                    s += a[[j, i]] * x;
                }
            }
        }
        w.push(s * coef[k]);
    }
    let total: C64 = w.iter().sum();
    let scale = w.iter().map(|z| z.norm()).sum::<f64>().max(1e-300);
    let rate_floor = 1e-9 * lam.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-12);
    let mut coherent = ZERO;
    let mut slowest = f64::INFINITY;
    let mut modes = Vec::new();
    for (k, &lk) in lam.iter().enumerate() {
        if w[k].norm() < 1e-12 * scale {
            continue;
        }
        if lk.norm() < rate_floor {
            coherent += w[k];
            continue;
        }
        if -lk.re < rate_floor {
            return Err(Error::HorizonTooShort(lk.im));
        }
        slowest = slowest.min(-lk.re);
        modes.push((lk, w[k]));
    }
    // Validate against direct regression on a short window.
    let gen = Generator::new(&h, &[], &collapse, FrameChoice::BareDiagonal)?;
    let t_check = (2.0 / slowest).min(20.0);
    let times = linspace(0.0, t_check, 21);
    let direct = lindblad::two_time_correlation(&steady, &sm, &sp, &times, &gen, &OdeConfig::adaptive(1e-10, 1e-12))?;
    let mut check: f64 = 0.0;
    for (t, c) in times.iter().zip(&direct) {
        let rec: C64 = modes.iter().map(|(lk, wk)| wk * (lk * t).exp()).sum::<C64>() + coherent;
        check = check.max((rec - c).norm());
    }
    let values = omega
        .iter()
        .map(|&wl| {
            let wr = wl - frame;
            let s: C64 = modes.iter().map(|(lk, wk)| -wk / (lk + C64::new(0.0, wr))).sum();
            s.re / PI
        })
        .collect();
    Ok(Spectrum { omega: omega.to_vec(), values, coherent_weight: coherent.re, total_weight: total.re, slowest_decay: slowest, regression_check: check })
}

/// Reduced cavity state of a qubit-cavity state.
pub fn cavity_state(state: &DensityState) -> Result<DensityState> {
    state.partial_trace(CAVITY)
}
