// SPDX-License-Identifier: Apache-2.0
//! Explicit Runge-Kutta integrators for complex vector ODEs: an adaptive
//! 8(5,3) Dormand-Prince pair and classical fixed-step RK4.

use crate::{Error, Result, C64};
use serde::{Deserialize, Serialize};

pub trait OdeRhs {
    fn eval(&mut self, t: f64, y: &[C64], dy: &mut [C64]);
}

impl<F: FnMut(f64, &[C64], &mut [C64])> OdeRhs for F {
    fn eval(&mut self, t: f64, y: &[C64], dy: &mut [C64]) {
        self(t, y, dy)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Method {
    Rk4Fixed { dt: f64 },
    AdaptiveEmbedded { rtol: f64, atol: f64, h_max: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OdeConfig {
    pub method: Method,
    pub max_steps: usize,
}

impl Default for OdeConfig {
    fn default() -> Self {
        OdeConfig { method: Method::AdaptiveEmbedded { rtol: 1e-9, atol: 1e-11, h_max: f64::INFINITY }, max_steps: 50_000_000 }
    }
}

impl OdeConfig {
    pub fn adaptive(rtol: f64, atol: f64) -> Self {
        OdeConfig { method: Method::AdaptiveEmbedded { rtol, atol, h_max: f64::INFINITY }, ..Default::default() }
    }

    pub fn rk4(dt: f64) -> Self {
        OdeConfig { method: Method::Rk4Fixed { dt }, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self.method {
            Method::Rk4Fixed { dt } => dt > 0.0 && dt.is_finite(),
            Method::AdaptiveEmbedded { rtol, atol, h_max } => rtol > 0.0 && atol > 0.0 && h_max > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("integrator config {:?}", self.method)))
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OdeStats {
    pub steps: usize,
    pub rejected: usize,
    pub evals: usize,
}

/// Integrates from `t0` and calls `observe(k, t_out[k], y)` at every output
/// time. Output times must be non-decreasing and not before `t0`.
pub fn integrate<R, O>(rhs: &mut R, y0: &[C64], t0: f64, t_out: &[f64], cfg: &OdeConfig, mut observe: O) -> Result<OdeStats>
where
    R: OdeRhs + ?Sized,
    O: FnMut(usize, f64, &[C64]) -> Result<()>,
{
    cfg.validate()?;
    if t_out.iter().any(|t| !t.is_finite()) || t_out.windows(2).any(|w| w[1] < w[0]) || t_out.first().is_some_and(|&t| t < t0) {
        return Err(Error::InvalidParameter("output times must be finite, sorted and >= t0".into()));
    }
    match cfg.method {
        Method::Rk4Fixed { dt } => rk4(rhs, y0, t0, t_out, dt, cfg.max_steps, &mut observe),
        Method::AdaptiveEmbedded { rtol, atol, h_max } => dop853(rhs, y0, t0, t_out, rtol, atol, h_max, cfg.max_steps, &mut observe),
    }
}

fn axpy(out: &mut [C64], y: &[C64], h: f64, terms: &[(f64, &[C64])]) {
    for i in 0..out.len() {
        let mut s = C64::new(0.0, 0.0);
        for (c, k) in terms {
            if *c != 0.0 {
                s += k[i] * *c;
            }
        }
        out[i] = y[i] + s * h;
    }
}

fn rk4<R, O>(rhs: &mut R, y0: &[C64], t0: f64, t_out: &[f64], dt: f64, max_steps: usize, observe: &mut O) -> Result<OdeStats>
where
    R: OdeRhs + ?Sized,
    O: FnMut(usize, f64, &[C64]) -> Result<()>,
{
    let n = y0.len();
    let mut y = y0.to_vec();
    let mut t = t0;
    let z = C64::new(0.0, 0.0);
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (vec![z; n], vec![z; n], vec![z; n], vec![z; n], vec![z; n]);
    let mut stats = OdeStats::default();
    for (idx, &tn) in t_out.iter().enumerate() {
        let span = tn - t;
        let m = if span > 0.0 { (span / dt).ceil().max(1.0) as usize } else { 0 };
        let h = if m > 0 { span / m as f64 } else { 0.0 };
        for s in 0..m {
            let ts = t + s as f64 * h;
            rhs.eval(ts, &y, &mut k1);
            axpy(&mut tmp, &y, 0.5 * h, &[(1.0, &k1)]);
            rhs.eval(ts + 0.5 * h, &tmp, &mut k2);
            axpy(&mut tmp, &y, 0.5 * h, &[(1.0, &k2)]);
            rhs.eval(ts + 0.5 * h, &tmp, &mut k3);
            axpy(&mut tmp, &y, h, &[(1.0, &k3)]);
            rhs.eval(ts + h, &tmp, &mut k4);
            for i in 0..n {
                y[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (h / 6.0);
            }
            stats.steps += 1;
            stats.evals += 4;
            if stats.steps > max_steps {
                return Err(Error::IntegrationFailure { t: ts, reason: "maximum step count exceeded".into() });
            }
        }
        t = tn;
        if y.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::IntegrationFailure { t, reason: "non-finite state".into() });
        }
        observe(idx, t, &y)?;
    }
    Ok(stats)
}

const C: [f64; 12] = [0.0, 0.05260015195876773, 0.0789002279381516, 0.1183503419072274, 0.2816496580927726, 0.3333333333333333, 0.25, 0.3076923076923077, 0.6512820512820513, 0.6, 0.8571428571428571, 1.0];
const A: [[f64; 12]; 12] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.05260015195876773, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.0197250569845379, 0.0591751709536137, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.02958758547680685, 0.0, 0.08876275643042054, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.2413651341592667, 0.0, -0.8845494793282861, 0.924834003261792, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.037037037037037035, 0.0, 0.0, 0.17082860872947386, 0.12546768756682242, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.037109375, 0.0, 0.0, 0.17025221101954405, 0.06021653898045596, -0.017578125, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.03709200011850479, 0.0, 0.0, 0.17038392571223998, 0.10726203044637328, -0.015319437748624402, 0.008273789163814023, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.6241109587160757, 0.0, 0.0, -3.3608926294469414, -0.868219346841726, 27.59209969944671, 20.154067550477894, -43.48988418106996, 0.0, 0.0, 0.0, 0.0],
    [0.47766253643826434, 0.0, 0.0, -2.4881146199716677, -0.590290826836843, 21.230051448181193, 15.279233632882423, -33.28821096898486, -0.020331201708508627, 0.0, 0.0, 0.0],
    [-0.9371424300859873, 0.0, 0.0, 5.186372428844064, 1.0914373489967295, -8.149787010746927, -18.52006565999696, 22.739487099350505, 2.4936055526796523, -3.0467644718982196, 0.0, 0.0],
    [2.273310147516538, 0.0, 0.0, -10.53449546673725, -2.0008720582248625, -17.9589318631188, 27.94888452941996, -2.8589982771350235, -8.87285693353063, 12.360567175794303, 0.6433927460157636, 0.0],
];
const B: [f64; 12] = [0.054293734116568765, 0.0, 0.0, 0.0, 0.0, 4.450312892752409, 1.8915178993145003, -5.801203960010585, 0.3111643669578199, -0.1521609496625161, 0.20136540080403034, 0.04471061572777259];
const E3: [f64; 12] = [-0.18980075407240762, 0.0, 0.0, 0.0, 0.0, 4.450312892752409, 1.8915178993145003, -5.801203960010585, -0.4226823213237919, -0.1521609496625161, 0.20136540080403034, 0.02265179219836082];
const E5: [f64; 12] = [0.01312004499419488, 0.0, 0.0, 0.0, 0.0, -1.2251564463762044, -0.4957589496572502, 1.6643771824549864, -0.35032884874997366, 0.3341791187130175, 0.08192320648511571, -0.022355307863886294];

fn rms_scaled(err: &[C64], y: &[C64], yn: &[C64], rtol: f64, atol: f64) -> f64 {
    let mut s = 0.0;
    for i in 0..err.len() {
        let sc = atol + rtol * y[i].norm().max(yn[i].norm());
        s += (err[i].norm() / sc).powi(2);
    }
    s
}

#[allow(clippy::too_many_arguments)]
fn dop853<R, O>(
    rhs: &mut R,
    y0: &[C64],
    t0: f64,
    t_out: &[f64],
    rtol: f64,
    atol: f64,
    h_max: f64,
    max_steps: usize,
    observe: &mut O,
) -> Result<OdeStats>
where
    R: OdeRhs + ?Sized,
    O: FnMut(usize, f64, &[C64]) -> Result<()>,
{
    const SAFETY: f64 = 0.9;
    const MIN_FACTOR: f64 = 0.2;
    const MAX_FACTOR: f64 = 10.0;
    let n = y0.len();
    let z = C64::new(0.0, 0.0);
    let mut stats = OdeStats::default();
    let mut y = y0.to_vec();
    let mut t = t0;
    let mut k: Vec<Vec<C64>> = (0..12).map(|_| vec![z; n]).collect();
    let mut ynew = vec![z; n];
    let mut fnew = vec![z; n];
    let mut tmp = vec![z; n];
    let mut e3 = vec![z; n];
    let mut e5 = vec![z; n];
    let mut out_idx = 0;
    while out_idx < t_out.len() && t_out[out_idx] <= t {
        observe(out_idx, t_out[out_idx], &y)?;
        out_idx += 1;
    }
    if out_idx == t_out.len() {
        return Ok(stats);
    }
    rhs.eval(t, &y, &mut k[0]);
    stats.evals += 1;

    // Initial step (Hairer & Wanner, II.4).
    let t_end = *t_out.last().unwrap();
    let mut h = {
        let sc: Vec<f64> = y.iter().map(|v| atol + rtol * v.norm()).collect();
        let d0 = (y.iter().zip(&sc).map(|(v, s)| (v.norm() / s).powi(2)).sum::<f64>() / n as f64).sqrt();
        let d1 = (k[0].iter().zip(&sc).map(|(v, s)| (v.norm() / s).powi(2)).sum::<f64>() / n as f64).sqrt();
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let h0 = h0.min(t_end - t);
        axpy(&mut tmp, &y, h0, &[(1.0, &k[0])]);
        rhs.eval(t + h0, &tmp, &mut fnew);
        stats.evals += 1;
        let d2 = (fnew.iter().zip(&k[0]).zip(&sc).map(|((a, b), s)| ((a - b).norm() / s).powi(2)).sum::<f64>() / n as f64).sqrt() / h0;
        let h1 = if d1 <= 1e-15 && d2 <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(1.0 / 8.0) };
        (100.0 * h0).min(h1).min(h_max)
    };
    let mut rejected_last = false;
    while out_idx < t_out.len() {
        let target = t_out[out_idx];
        let mut hit = false;
        let mut hs = h.min(h_max);
        if t + 1.01 * hs >= target {
            hs = target - t;
            hit = true;
        }
        if hs < 1e-14 * t.abs().max(1.0) {
            if hs <= 0.0 || hit {
                // Output time coincides with the current time up to rounding.
                t = target;
                observe(out_idx, t, &y)?;
                out_idx += 1;
                continue;
            }
            return Err(Error::IntegrationFailure { t, reason: format!("step size underflow (h = {hs:.3e})") });
        }
        for s in 1..12 {
            let terms: Vec<(f64, &[C64])> = (0..s).map(|j| (A[s][j], k[j].as_slice())).collect();
            axpy(&mut tmp, &y, hs, &terms);
            let (_, rest) = k.split_at_mut(s);
            rhs.eval(t + C[s] * hs, &tmp, &mut rest[0]);
        }
        {
            let terms: Vec<(f64, &[C64])> = (0..12).map(|j| (B[j], k[j].as_slice())).collect();
            axpy(&mut ynew, &y, hs, &terms);
        }
        rhs.eval(t + hs, &ynew, &mut fnew);
        stats.evals += 12;
        for i in 0..n {
            let mut a = z;
            let mut b = z;
            for j in 0..12 {
                a += k[j][i] * E3[j];
                b += k[j][i] * E5[j];
            }
            e3[i] = a;
            e5[i] = b;
        }
        let err5 = rms_scaled(&e5, &y, &ynew, rtol, atol);
        let err3 = rms_scaled(&e3, &y, &ynew, rtol, atol);
        let err = if err5 == 0.0 && err3 == 0.0 { 0.0 } else { hs.abs() * err5 / ((err5 + 0.01 * err3) * n as f64).sqrt() };
        stats.steps += 1;
        if stats.steps > max_steps {
            return Err(Error::IntegrationFailure { t, reason: "maximum step count exceeded".into() });
        }
        if !err.is_finite() {
            stats.rejected += 1;
            h = hs * MIN_FACTOR;
            rejected_last = true;
            continue;
        }
        if err <= 1.0 {
            let mut factor = if err == 0.0 { MAX_FACTOR } else { (SAFETY * err.powf(-1.0 / 8.0)).min(MAX_FACTOR) };
            if rejected_last {
                factor = factor.min(1.0);
            }
            t = if hit { target } else { t + hs };
            std::mem::swap(&mut y, &mut ynew);
            std::mem::swap(&mut k[0], &mut fnew);
            if !hit || hs >= h {
                h = hs * factor;
            }
            rejected_last = false;
            while out_idx < t_out.len() && t_out[out_idx] <= t {
                observe(out_idx, t_out[out_idx], &y)?;
                out_idx += 1;
            }
        } else {
            stats.rejected += 1;
            h = hs * (SAFETY * err.powf(-1.0 / 8.0)).max(MIN_FACTOR);
            rejected_last = true;
        }
    }
    Ok(stats)
}
