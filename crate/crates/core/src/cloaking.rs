// SPDX-License-Identifier: Apache-2.0
//! Classical field trajectories and the cancellation tones derived from them.

use crate::model::{DriveSpec, HybridizedPurcell, RealFn};
use crate::ode::{self, OdeConfig};
use crate::{Error, Result, C64};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::fmt;
use std::sync::Arc;

pub const DEFAULT_POINTS_PER_PERIOD: usize = 128;

/// Uniform grid t0, t0 + dt, …, t0 + (n-1) dt.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    pub t0: f64,
    pub dt: f64,
    pub n: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t_end: f64, n: usize) -> Result<Self> {
        if n < 2 || !(t_end > t0) {
            return Err(Error::InvalidParameter(format!("time grid [{t0}, {t_end}] with {n} points")));
        }
        Ok(TimeGrid { t0, dt: (t_end - t0) / (n - 1) as f64, n })
    }

    /// Grid covering [0, t_end] with at least `ppp` points per period of `omega_max`.
    pub fn for_carrier(t_end: f64, omega_max: f64, ppp: usize) -> Result<Self> {
        let period = TAU / omega_max.abs().max(1e-12);
        let n = ((t_end / period) * ppp as f64).ceil() as usize + 1;
        Self::new(0.0, t_end, n.max(2))
    }

    pub fn t(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn t_end(&self) -> f64 {
        self.t(self.n - 1)
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.t(k)).collect()
    }
}

/// Sampled classical mode amplitudes. Mode 0 is the readout cavity field
/// alpha; mode 1 (if present) is the filter field beta or the minus mode.
#[derive(Clone, Debug)]
pub struct AlphaTrajectory {
    pub grid: TimeGrid,
    pub values: Vec<Vec<C64>>,
    pub derivs: Vec<Vec<C64>>,
    pub initial: Vec<C64>,
}

impl AlphaTrajectory {
    pub fn n_modes(&self) -> usize {
        self.values.len()
    }

    pub fn alpha0(&self) -> C64 {
        self.initial[0]
    }

    /// Cubic Hermite interpolation of mode `m` using the sampled derivatives.
    pub fn mode(&self, m: usize, t: f64) -> C64 {
        let g = &self.grid;
        let x = ((t - g.t0) / g.dt).clamp(0.0, (g.n - 1) as f64);
        let k = (x.floor() as usize).min(g.n - 2);
        let s = x - k as f64;
        let (y0, y1) = (self.values[m][k], self.values[m][k + 1]);
        let (d0, d1) = (self.derivs[m][k] * g.dt, self.derivs[m][k + 1] * g.dt);
        let s2 = s * s;
        let s3 = s2 * s;
        y0 * (2.0 * s3 - 3.0 * s2 + 1.0) + d0 * (s3 - 2.0 * s2 + s) + y1 * (-2.0 * s3 + 3.0 * s2) + d1 * (s3 - s2)
    }

    pub fn alpha(&self, t: f64) -> C64 {
        self.mode(0, t)
    }

    pub fn beta(&self, t: f64) -> Option<C64> {
        (self.n_modes() > 1).then(|| self.mode(1, t))
    }

    pub fn last(&self, m: usize) -> C64 {
        *self.values[m].last().unwrap()
    }
}

/// Linear mode equations  y' = M y + N y^* + F(t).
pub struct LinearModes {
    pub m: Array2<C64>,
    pub n: Array2<C64>,
    pub forcing: Arc<dyn Fn(f64) -> Vec<C64> + Send + Sync>,
}

impl LinearModes {
    fn rhs(&self, t: f64, y: &[C64], dy: &mut [C64]) {
        let f = (self.forcing)(t);
        for i in 0..y.len() {
            let mut s = f[i];
            for j in 0..y.len() {
                s += self.m[[i, j]] * y[j] + self.n[[i, j]] * y[j].conj();
            }
            dy[i] = s;
        }
    }

    pub fn solve(&self, y0: &[C64], grid: &TimeGrid) -> Result<AlphaTrajectory> {
        let nm = y0.len();
        let mut values = vec![Vec::with_capacity(grid.n); nm];
        let mut derivs = vec![Vec::with_capacity(grid.n); nm];
        let mut f = |t: f64, y: &[C64], dy: &mut [C64]| self.rhs(t, y, dy);
        let cfg = OdeConfig::adaptive(1e-12, 1e-14);
        let times = grid.times();
        let mut dy = vec![C64::new(0.0, 0.0); nm];
        ode::integrate(&mut f, y0, grid.t0, &times, &cfg, |_, t, y| {
            self.rhs(t, y, &mut dy);
            for m in 0..nm {
                values[m].push(y[m]);
                derivs[m].push(dy[m]);
            }
            Ok(())
        })?;
        Ok(AlphaTrajectory { grid: *grid, values, derivs, initial: y0.to_vec() })
    }

    /// Max over grid intervals of the Simpson-rule defect of the integral
    /// form, normalized by dt * max|y'|.
    pub fn residual(&self, tr: &AlphaTrajectory) -> f64 {
        let g = &tr.grid;
        let nm = tr.n_modes();
        let mut scale: f64 = 0.0;
        for m in 0..nm {
            for d in &tr.derivs[m] {
                scale = scale.max(d.norm());
            }
        }
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst: f64 = 0.0;
        let mut mid = vec![C64::new(0.0, 0.0); nm];
        let mut fm = vec![C64::new(0.0, 0.0); nm];
        for k in 0..g.n - 1 {
            let tm = g.t(k) + 0.5 * g.dt;
            for m in 0..nm {
                mid[m] = tr.mode(m, tm);
            }
            self.rhs(tm, &mid, &mut fm);
            for m in 0..nm {
                let simpson = (tr.derivs[m][k] + fm[m] * 4.0 + tr.derivs[m][k + 1]) * (g.dt / 6.0);
                let defect = tr.values[m][k + 1] - tr.values[m][k] - simpson;
                worst = worst.max(defect.norm() / (g.dt * scale));
            }
        }
        worst
    }
}

fn sum_forcing(drives: &[DriveSpec]) -> impl Fn(f64) -> C64 + Send + Sync + 'static {
    let drives = drives.to_vec();
    move |t| drives.iter().map(|d| d.forcing(t)).sum()
}

/// alpha' = -(i w_r + k/2) alpha + F(t)
pub fn alpha_equation(drives: &[DriveSpec], omega_r: f64, kappa: f64) -> LinearModes {
    let f = sum_forcing(drives);
    LinearModes {
        m: Array2::from_elem((1, 1), C64::new(-0.5 * kappa, -omega_r)),
        n: Array2::zeros((1, 1)),
        forcing: Arc::new(move |t| vec![f(t)]),
    }
}

pub fn solve_alpha(drive: &DriveSpec, omega_r: f64, kappa: f64, alpha0: C64, grid: &TimeGrid) -> Result<AlphaTrajectory> {
    solve_alpha_multi(std::slice::from_ref(drive), omega_r, kappa, alpha0, grid)
}

pub fn solve_alpha_multi(drives: &[DriveSpec], omega_r: f64, kappa: f64, alpha0: C64, grid: &TimeGrid) -> Result<AlphaTrajectory> {
    if kappa < 0.0 {
        return Err(Error::InvalidParameter("kappa < 0".into()));
    }
    alpha_equation(drives, omega_r, kappa).solve(&[alpha0], grid)
}

/// Readout-cavity and filter fields without rotating-wave approximation in
/// the cavity-filter coupling; only the filter is damped.
pub fn purcell_equation(drive: &DriveSpec, omega_r: f64, omega_f: f64, kappa_f: f64, j: f64) -> LinearModes {
    let mij = C64::new(0.0, -j);
    let m = Array2::from_shape_vec((2, 2), vec![C64::new(0.0, -omega_r), mij, mij, C64::new(-0.5 * kappa_f, -omega_f)]).unwrap();
    let n = Array2::from_shape_vec((2, 2), vec![C64::new(0.0, 0.0), mij, mij, C64::new(0.0, 0.0)]).unwrap();
    let d = drive.clone();
    LinearModes { m, n, forcing: Arc::new(move |t| vec![C64::new(0.0, 0.0), d.forcing(t)]) }
}

/// Hybridized plus/minus mode amplitudes in the rotating-wave model, driven
/// through the filter port. `kappa` is an optional intrinsic readout loss.
pub fn hybrid_equation(drive: &DriveSpec, hy: &HybridizedPurcell, kappa_f: f64, kappa: f64) -> LinearModes {
    let (c, s) = (hy.cos_half, hy.sin_half);
    let w = [s, c];
    let u = [c, -s];
    let mut m = Array2::zeros((2, 2));
    for i in 0..2 {
        for k in 0..2 {
            m[[i, k]] = C64::new(-0.5 * kappa_f * w[i] * w[k] - 0.5 * kappa * u[i] * u[k], 0.0);
        }
    }
    m[[0, 0]] += C64::new(0.0, -hy.omega_plus);
    m[[1, 1]] += C64::new(0.0, -hy.omega_minus);
    let d = drive.clone();
    LinearModes { m, n: Array2::zeros((2, 2)), forcing: Arc::new(move |t| { let f = d.forcing(t); vec![f * w[0], f * w[1]] }) }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToneStrategy {
    ExactOde,
    ClosedFormConstant,
    ApproximateMinus,
    AnsatzSingleFrequency,
    PurcellOde,
    GeneralMultilevel,
}

impl ToneStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            ToneStrategy::ExactOde => "exact_ode",
            ToneStrategy::ClosedFormConstant => "closed_form_constant",
            ToneStrategy::ApproximateMinus => "approximate_minus",
            ToneStrategy::AnsatzSingleFrequency => "ansatz_single_frequency",
            ToneStrategy::PurcellOde => "purcell_ode",
            ToneStrategy::GeneralMultilevel => "general_multilevel",
        }
    }
}

/// Real qubit-port amplitude E2(t) in rad/ns.
#[derive(Clone)]
pub struct CancellationTone {
    pub strategy: ToneStrategy,
    pub params: BTreeMap<String, f64>,
    eval: RealFn,
    alpha: Option<Arc<AlphaTrajectory>>,
}

impl fmt::Debug for CancellationTone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CancellationTone({}, {:?})", self.strategy.name(), self.params)
    }
}

impl CancellationTone {
    pub fn from_fn(strategy: ToneStrategy, params: BTreeMap<String, f64>, eval: RealFn) -> Self {
        CancellationTone { strategy, params, eval, alpha: None }
    }

    pub fn eval(&self, t: f64) -> f64 {
        (self.eval)(t)
    }

    pub fn function(&self) -> RealFn {
        self.eval.clone()
    }

    /// Classical field record behind the tone, for strategies that have one.
    pub fn alpha(&self) -> Option<&AlphaTrajectory> {
        self.alpha.as_deref()
    }

    /// (t, E2) sampled at `rate` samples per ns on [0, t_end].
    pub fn sample(&self, rate: f64, t_end: f64) -> Vec<(f64, f64)> {
        let n = (t_end * rate).floor() as usize + 1;
        (0..n).map(|k| {
            let t = k as f64 / rate;
            (t, self.eval(t))
        }).collect()
    }
}

/// E2(t) = -2 g Im alpha(t)
pub fn exact_tone(alpha: &AlphaTrajectory, g: f64) -> CancellationTone {
    let a = Arc::new(alpha.clone());
    let a2 = a.clone();
    let mut params = BTreeMap::new();
    params.insert("g".into(), g);
    CancellationTone { strategy: ToneStrategy::ExactOde, params, eval: Arc::new(move |t| -2.0 * g * a2.alpha(t).im), alpha: Some(a) }
}

/// Coefficient -g(alpha e^{i phi} + c.c.) multiplying O_q. The charge
/// coupling i g n (a^dag - a) corresponds to phi = -pi/2.
pub fn general_tone(alpha: &AlphaTrajectory, g: f64, phi: f64) -> CancellationTone {
    let a = Arc::new(alpha.clone());
    let a2 = a.clone();
    let rot = C64::from_polar(1.0, phi);
    let mut params = BTreeMap::new();
    params.insert("g".into(), g);
    params.insert("coupling_phase".into(), phi);
    CancellationTone { strategy: ToneStrategy::GeneralMultilevel, params, eval: Arc::new(move |t| -2.0 * g * (a2.alpha(t) * rot).re), alpha: Some(a) }
}

/// Calibration offsets of the closed-form tone.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Miscalibration {
    /// Added to the cavity frequency used in the tone (rad/ns).
    pub omega_r_offset: f64,
    /// phi_± -> phi_± (1 + delta_phi)
    pub delta_phi: f64,
    /// eps -> eps (1 + delta_eps)
    pub delta_eps: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClosedFormParams {
    pub eps1: f64,
    pub omega1: f64,
    pub phi1: f64,
    pub omega_r: f64,
    pub kappa: f64,
    pub g: f64,
    pub miscalibration: Miscalibration,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Branches {
    pub omega_plus: f64,
    pub omega_minus: f64,
    pub phi_plus: f64,
    pub phi_minus: f64,
    pub r_plus: f64,
    pub r_minus: f64,
    pub a_minus: f64,
    pub eps: f64,
    pub omega_r: f64,
}

impl ClosedFormParams {
    pub fn branches(&self) -> Branches {
        let mc = self.miscalibration;
        let wr = self.omega_r + mc.omega_r_offset;
        let eps = self.eps1 * (1.0 + mc.delta_eps);
        let wp = wr + self.omega1;
        let wm = wr - self.omega1;
        let k2 = 0.5 * self.kappa;
        let r_plus = (wp * wp + k2 * k2).sqrt();
        let r_minus = (wm * wm + k2 * k2).sqrt();
        Branches {
            omega_plus: wp,
            omega_minus: wm,
            phi_plus: (-2.0 * wp / self.kappa).atan() * (1.0 + mc.delta_phi),
            phi_minus: (-2.0 * wm / self.kappa).atan() * (1.0 + mc.delta_phi),
            r_plus,
            r_minus,
            a_minus: -self.g * eps / r_minus,
            eps,
            omega_r: wr,
        }
    }

    fn param_map(&self) -> BTreeMap<String, f64> {
        let b = self.branches();
        let mut p = BTreeMap::new();
        for (k, v) in [
            ("eps1", self.eps1),
            ("omega1", self.omega1),
            ("phi1", self.phi1),
            ("omega_r", self.omega_r),
            ("kappa", self.kappa),
            ("g", self.g),
            ("omega_r_offset", self.miscalibration.omega_r_offset),
            ("delta_phi", self.miscalibration.delta_phi),
            ("delta_eps", self.miscalibration.delta_eps),
            ("A_minus", b.a_minus),
            ("phi_plus", b.phi_plus),
            ("phi_minus", b.phi_minus),
        ] {
            p.insert(k.to_string(), v);
        }
        p
    }
}

/// Tone for a constant sine drive switched on at t = 0 with zero initial
/// field. `truncated` keeps only the slowly rotating branch.
pub fn closed_form_tone(p: &ClosedFormParams, truncated: bool) -> CancellationTone {
    let b = p.branches();
    let (w1, phi1, k2, ge) = (p.omega1, p.phi1, 0.5 * p.kappa, p.g * b.eps);
    let f: RealFn = if truncated {
        Arc::new(move |t: f64| {
            let decay = (-k2 * t).exp();
            b.a_minus * ((w1 * t + phi1 - b.phi_minus).cos() - decay * (b.omega_r * t + phi1 - b.phi_minus).cos())
        })
    } else {
        Arc::new(move |t: f64| {
            let decay = (-k2 * t).exp();
            let plus = ((w1 * t + phi1 + b.phi_plus).cos() - decay * (b.omega_r * t - phi1 - b.phi_plus).cos()) / b.r_plus;
            let minus = ((w1 * t + phi1 - b.phi_minus).cos() - decay * (b.omega_r * t + phi1 - b.phi_minus).cos()) / b.r_minus;
            ge * (plus - minus)
        })
    };
    let strategy = if truncated { ToneStrategy::ApproximateMinus } else { ToneStrategy::ClosedFormConstant };
    CancellationTone::from_fn(strategy, p.param_map(), f)
}

/// A cos(w1 t - phi)(1 - e^{-k t/2})
pub fn ansatz_tone(amp: f64, phi: f64, omega1: f64, kappa: f64) -> CancellationTone {
    let mut params = BTreeMap::new();
    for (k, v) in [("A", amp), ("phi", phi), ("omega1", omega1), ("kappa", kappa)] {
        params.insert(k.to_string(), v);
    }
    CancellationTone::from_fn(
        ToneStrategy::AnsatzSingleFrequency,
        params,
        Arc::new(move |t| amp * (omega1 * t - phi).cos() * (1.0 - (-0.5 * kappa * t).exp())),
    )
}

/// Ansatz parameters matching the leading term of the truncated tone.
pub fn ansatz_seed(p: &ClosedFormParams) -> (f64, f64) {
    let b = p.branches();
    (b.a_minus, b.phi_minus - p.phi1)
}

/// Tone from the coupled readout/filter equations.
#[allow(clippy::too_many_arguments)]
pub fn purcell_tone(drive: &DriveSpec, omega_r: f64, omega_f: f64, kappa_f: f64, j: f64, g: f64, grid: &TimeGrid) -> Result<(AlphaTrajectory, CancellationTone)> {
    let eq = purcell_equation(drive, omega_r, omega_f, kappa_f, j);
    let tr = eq.solve(&[C64::new(0.0, 0.0); 2], grid)?;
    let mut tone = exact_tone(&tr, g);
    tone.strategy = ToneStrategy::PurcellOde;
    tone.params.insert("J".into(), j);
    tone.params.insert("kappa_f".into(), kappa_f);
    Ok((tr, tone))
}

/// Readout amplitude a = c a_+ - s a_- from a hybrid-mode trajectory.
pub fn hybrid_readout(tr: &AlphaTrajectory, hy: &HybridizedPurcell, t: f64) -> C64 {
    tr.mode(0, t) * hy.cos_half - tr.mode(1, t) * hy.sin_half
}

/// Tone for the hybridized rotating-wave Purcell model: -2 g Im[c a_+ - s a_-].
pub fn hybrid_tone(tr: &AlphaTrajectory, hy: &HybridizedPurcell, g: f64) -> CancellationTone {
    let a = Arc::new(tr.clone());
    let a2 = a.clone();
    let hy = *hy;
    let mut params = BTreeMap::new();
    params.insert("g".into(), g);
    CancellationTone {
        strategy: ToneStrategy::PurcellOde,
        params,
        eval: Arc::new(move |t| -2.0 * g * hybrid_readout(&a2, &hy, t).im),
        alpha: Some(a),
    }
}

pub fn zero_tone() -> CancellationTone {
    CancellationTone::from_fn(ToneStrategy::ExactOde, BTreeMap::new(), Arc::new(|_| 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Envelope, Port, Waveform};
    use crate::units::{ghz, mhz};

    fn fig3b_drive(eps_mhz: f64) -> DriveSpec {
        DriveSpec::sine(Port::Cavity, mhz(eps_mhz), ghz(7.6648), 0.0)
    }

    #[test]
    fn zero_drive_zero_alpha() {
        let g = TimeGrid::new(0.0, 50.0, 2001).unwrap();
        let tr = solve_alpha(&fig3b_drive(0.0), ghz(7.66), mhz(10.1), C64::new(0.0, 0.0), &g).unwrap();
        assert!(tr.values[0].iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn steady_amplitude_lorentzian() {
        let (wr, k, w1) = (ghz(7.66), mhz(10.1), ghz(7.6648));
        let t_end = 40.0 / k;
        let g = TimeGrid::for_carrier(t_end, w1, 24).unwrap();
        let tr = solve_alpha(&fig3b_drive(10.0), wr, k, C64::new(0.0, 0.0), &g).unwrap();
        let want = 0.5 * mhz(10.0) / ((wr - w1).powi(2) + 0.25 * k * k).sqrt();
        assert!((want - 0.718).abs() < 2e-3, "{want}");
        // Peak |alpha| over the last carrier cycles, counter-rotating ripple ~ eps/(2 w_+).
        let ripple = 0.5 * mhz(10.0) / (wr + w1);
        let last: Vec<f64> = tr.values[0][g.n - 200..].iter().map(|z| z.norm()).collect();
        for a in last {
            assert!((a - want).abs() < 2.0 * ripple + 1e-6, "{a} vs {want}");
        }
    }

    #[test]
    fn resonant_rwa_linear_growth() {
        let w = 3.0;
        let eps = 0.2;
        let d = DriveSpec { port: Port::Cavity, envelope: Envelope::Constant(eps), carrier: w, phase: 0.0, waveform: Waveform::ComplexRwa };
        let g = TimeGrid::new(0.0, 10.0, 1001).unwrap();
        let tr = solve_alpha(&d, w, 0.0, C64::new(0.0, 0.0), &g).unwrap();
        for k in 0..g.n {
            assert!((tr.values[0][k].norm() - 0.5 * eps * g.t(k)).abs() < 1e-10);
        }
    }

    #[test]
    fn ode_matches_integral_form() {
        let (wr, k) = (2.0, 0.3);
        let d = DriveSpec { port: Port::Cavity, envelope: Envelope::Custom(Arc::new(|t: f64| 0.4 * (0.2 * t).sin().powi(2))), carrier: 1.7, phase: 0.4, waveform: Waveform::Sine };
        let g = TimeGrid::new(0.0, 12.0, 601).unwrap();
        let a0 = C64::new(0.3, -0.1);
        let tr = solve_alpha(&d, wr, k, a0, &g).unwrap();
        let z = C64::new(0.5 * k, wr);
        for kk in (0..g.n).step_by(50) {
            let t = g.t(kk);
            // composite Simpson on a fine grid
            let m = 4000;
            let h = t / m as f64;
            let mut s = C64::new(0.0, 0.0);
            for i in 0..=m {
                let tau = i as f64 * h;
                let w = if i == 0 || i == m { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                s += (-z * (t - tau)).exp() * d.forcing(tau) * w;
            }
            let want = a0 * (-z * t).exp() + s * (h / 3.0);
            assert!((tr.values[0][kk] - want).norm() < 1e-8, "t={t}");
        }
    }

    #[test]
    fn residual_small() {
        let (wr, k, w1) = (ghz(7.66), mhz(10.1), ghz(7.6648));
        let g = TimeGrid::for_carrier(60.0, w1, DEFAULT_POINTS_PER_PERIOD).unwrap();
        let d = fig3b_drive(20.0);
        let eq = alpha_equation(std::slice::from_ref(&d), wr, k);
        let tr = eq.solve(&[C64::new(0.0, 0.0)], &g).unwrap();
        let r = eq.residual(&tr);
        assert!(r < 1e-8, "{r:.3e}");
    }

    #[test]
    fn exact_tone_trivia() {
        let g = TimeGrid::new(0.0, 10.0, 101).unwrap();
        let real = AlphaTrajectory { grid: g, values: vec![(0..101).map(|k| C64::new(k as f64, 0.0)).collect()], derivs: vec![vec![C64::new(10.0, 0.0); 101]], initial: vec![C64::new(0.0, 0.0)] };
        let t = exact_tone(&real, 0.7);
        assert!((0..200).all(|k| t.eval(k as f64 * 0.05) == 0.0));
        let tr = solve_alpha(&fig3b_drive(15.0), ghz(7.66), mhz(10.1), C64::new(0.0, 0.0), &TimeGrid::for_carrier(5.0, ghz(7.7), 64).unwrap()).unwrap();
        assert!(exact_tone(&tr, 0.0).sample(10.0, 5.0).iter().all(|s| s.1 == 0.0));
        assert_eq!(exact_tone(&tr, 0.9).eval(0.0), 0.0);
    }

    fn fig3b_params(eps: f64) -> ClosedFormParams {
        ClosedFormParams { eps1: mhz(eps), omega1: ghz(7.6648), phi1: 0.0, omega_r: ghz(7.66), kappa: mhz(10.1), g: mhz(140.6), miscalibration: Miscalibration::default() }
    }

    #[test]
    fn closed_form_matches_exact() {
        for phi1 in [0.0, 0.7] {
            let mut p = fig3b_params(20.0);
            p.phi1 = phi1;
            let t_end = 10.0 / p.kappa;
            let grid = TimeGrid::for_carrier(t_end, p.omega1, 64).unwrap();
            let d = DriveSpec::sine(Port::Cavity, p.eps1, p.omega1, phi1);
            let tr = solve_alpha(&d, p.omega_r, p.kappa, C64::new(0.0, 0.0), &grid).unwrap();
            let ex = exact_tone(&tr, p.g);
            let cf = closed_form_tone(&p, false);
            let amax = p.branches().a_minus.abs();
            let mut worst: f64 = 0.0;
            for k in 0..grid.n {
                let t = grid.t(k);
                worst = worst.max((ex.eval(t) - cf.eval(t)).abs());
            }
            assert!(worst < 1e-9 * amax, "phi1={phi1}: {:.3e}", worst / amax);
        }
    }

    #[test]
    fn truncated_bound() {
        let p = fig3b_params(20.0);
        let b = p.branches();
        let bound = b.r_minus / b.r_plus;
        assert!(bound > 4.5e-4 && bound < 4.6e-4, "{bound}");
        let full = closed_form_tone(&p, false);
        let tr = closed_form_tone(&p, true);
        let amax = b.a_minus.abs();
        for k in 0..5000 {
            let t = k as f64 * 0.0371;
            assert!((full.eval(t) - tr.eval(t)).abs() <= 2.0 * bound * amax + 1e-15);
        }
        let z = closed_form_tone(&fig3b_params(0.0), false);
        assert!((0..100).all(|k| z.eval(k as f64) == 0.0));
    }

    #[test]
    fn all_strategies_start_at_zero() {
        let p = fig3b_params(12.0);
        assert_eq!(closed_form_tone(&p, false).eval(0.0), 0.0);
        assert!(closed_form_tone(&p, true).eval(0.0).abs() < 1e-15);
        let (a, phi) = ansatz_seed(&p);
        assert_eq!(ansatz_tone(a, phi, p.omega1, p.kappa).eval(0.0), 0.0);
    }

    #[test]
    fn general_tone_reduces_to_exact() {
        let p = fig3b_params(20.0);
        let grid = TimeGrid::for_carrier(30.0, p.omega1, 64).unwrap();
        let d = DriveSpec::sine(Port::Cavity, p.eps1, p.omega1, 0.0);
        let tr = solve_alpha(&d, p.omega_r, p.kappa, C64::new(0.0, 0.0), &grid).unwrap();
        let ex = exact_tone(&tr, p.g);
        let gen = general_tone(&tr, p.g, -std::f64::consts::FRAC_PI_2);
        let gen_pos = general_tone(&tr, p.g, std::f64::consts::FRAC_PI_2);
        for k in 0..300 {
            let t = k as f64 * 0.1;
            assert!((ex.eval(t) - gen.eval(t)).abs() < 1e-12);
            assert!((ex.eval(t) + gen_pos.eval(t)).abs() < 1e-12);
        }
        let real = AlphaTrajectory { grid, values: vec![vec![C64::new(0.5, 0.0); grid.n]], derivs: vec![vec![C64::new(0.0, 0.0); grid.n]], initial: vec![C64::new(0.5, 0.0)] };
        assert!((general_tone(&real, 0.3, 0.0).eval(1.0) + 2.0 * 0.3 * 0.5).abs() < 1e-15);
    }

    #[test]
    fn purcell_trivial_cases() {
        let grid = TimeGrid::new(0.0, 20.0, 4001).unwrap();
        let d = DriveSpec::sine(Port::Purcell, mhz(10.0), ghz(7.64), 0.0);
        let (tr, tone) = purcell_tone(&d, ghz(7.647), ghz(7.632), mhz(29.1), 0.0, mhz(166.85), &grid).unwrap();
        assert!(tr.values[0].iter().all(|z| z.norm() == 0.0));
        assert_eq!(tone.eval(7.3), 0.0);
        let d0 = DriveSpec::sine(Port::Purcell, 0.0, ghz(7.64), 0.0);
        let (tr, _) = purcell_tone(&d0, ghz(7.647), ghz(7.632), mhz(29.1), mhz(26.14), mhz(166.85), &grid).unwrap();
        assert!(tr.values.iter().all(|v| v.iter().all(|z| z.norm() == 0.0)));
    }

    #[test]
    fn linearity_in_drive() {
        let grid = TimeGrid::new(0.0, 30.0, 3001).unwrap();
        let da = DriveSpec { port: Port::Cavity, envelope: Envelope::Constant(0.3), carrier: 2.1, phase: 0.2, waveform: Waveform::Sine };
        let db = DriveSpec { port: Port::Cavity, envelope: Envelope::Window { amp: 0.5, t_on: 3.0, t_off: 17.0 }, carrier: 1.9, phase: -1.0, waveform: Waveform::Sine };
        let a = solve_alpha(&da, 2.0, 0.2, C64::new(0.0, 0.0), &grid).unwrap();
        let b = solve_alpha(&db, 2.0, 0.2, C64::new(0.0, 0.0), &grid).unwrap();
        let ab = solve_alpha_multi(&[da, db], 2.0, 0.2, C64::new(0.0, 0.0), &grid).unwrap();
        for k in 0..grid.n {
            assert!((ab.values[0][k] - a.values[0][k] - b.values[0][k]).norm() < 1e-10);
        }
    }
}
