// SPDX-License-Identifier: Apache-2.0
//! DRAG X gate on the dressed computational subspace.

use super::calibration::CalibrationResult;
use super::{driven_terms, DrivenTerms, FieldFrame};
use crate::cloaking::{self, ClosedFormParams, Miscalibration};
use crate::hilbert::{Operator, SpaceLayout};
use crate::lindblad::{Generator, IntegratorConfig};
use crate::linalg::{self, ONE};
use crate::model::{self, BuiltModel, DressedData, DriveSpec, DriveTerm, Port, RealFn, SystemSpec, Variant};
use crate::optimize::{nelder_mead, NelderMeadConfig};
use crate::{Error, Result, C64};
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::sync::Arc;

/// Gate parameters. Amplitude and carrier in rad/ns, duration in ns.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateSpec {
    pub t_g: f64,
    pub eps_g: f64,
    pub d_g: f64,
    pub phi_g: f64,
    pub carrier: f64,
}

impl GateSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_g > 0.0 && self.t_g.is_finite()) {
            return Err(Error::InvalidParameter(format!("t_g = {} must be > 0", self.t_g)));
        }
        for (n, v) in [("eps_g", self.eps_g), ("d_g", self.d_g), ("phi_g", self.phi_g), ("carrier", self.carrier)] {
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{n} not finite")));
            }
        }
        Ok(())
    }

    /// f(t) = sqrt(pi/2) (t - t_g/2)/(t_g/4)
    pub fn shape_argument(&self, t: f64) -> f64 {
        (0.5 * PI).sqrt() * (t - 0.5 * self.t_g) / (0.25 * self.t_g)
    }

    /// (sech f, sinh f / cosh^2 f)
    pub fn envelope(&self, t: f64) -> (f64, f64) {
        let f = self.shape_argument(t);
        let c = f.cosh();
        (1.0 / c, f.sinh() / (c * c))
    }

    /// Coefficient of n_tr; zero outside [0, t_g].
    pub fn coefficient(&self, t: f64) -> f64 {
        if !(0.0..=self.t_g).contains(&t) {
            return 0.0;
        }
        let (main, drag) = self.envelope(t);
        let x = self.carrier * t + self.phi_g;
        self.eps_g * (main * x.sin() + self.d_g * drag * x.cos())
    }
}

pub fn drag_hamiltonian(gate: &GateSpec) -> RealFn {
    let g = *gate;
    Arc::new(move |t| g.coefficient(t))
}

/// Frame of the ideal target state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetFrame {
    /// Target U rho U^dag in the laboratory frame.
    Lab,
    /// Target additionally evolved by the free dressed Hamiltonian.
    Rotating,
}

/// Undriven system with its dressed computational subspace.
#[derive(Clone, Debug)]
pub struct GateSystem {
    pub spec: SystemSpec,
    pub model: BuiltModel,
    pub dressed: DressedData,
    pub ground: Array1<C64>,
    pub excited: Array1<C64>,
    pub energies: (f64, f64),
    pub target_frame: TargetFrame,
}

impl GateSystem {
    pub fn new(spec: &SystemSpec, target_frame: TargetFrame) -> Result<Self> {
        let spec = spec.without_drives();
        if spec.variant == Variant::TlsRwa {
            return Err(Error::VariantMismatch("gate protocol needs a multilevel qubit".into()));
        }
        let model = model::build(&spec)?;
        let dressed = model::dressed_quantities(&spec)?;
        let nm = model.layout.dims().len();
        let mut gl = vec![0; nm];
        let ground = dressed.state(&model.layout, &gl)?;
        let e0 = dressed.energy(&gl)?;
        gl[0] = 1;
        let excited = dressed.state(&model.layout, &gl)?;
        let e1 = dressed.energy(&gl)?;
        Ok(GateSystem { spec, model, dressed, ground, excited, energies: (e0, e1), target_frame })
    }

    pub fn omega_q(&self) -> f64 {
        self.dressed.omega_q
    }

    pub fn layout(&self) -> &SpaceLayout {
        &self.model.layout
    }

    fn port(&self) -> Port {
        if self.spec.variant == Variant::TransmonPurcell {
            Port::Purcell
        } else {
            Port::Cavity
        }
    }
}

/// Average over the six cardinal states.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GateFidelityResult {
    pub fidelity: f64,
    pub error: f64,
    pub breakdown: Vec<(String, f64)>,
}

/// Images of |g><g|, |e><e| and |g><e| under the channel.
pub struct ChannelSamples {
    pub gg: Array2<C64>,
    pub ee: Array2<C64>,
    pub ge: Array2<C64>,
}

const CARDINALS: [(&str, f64, f64, f64); 6] = [
    // (name, |a_g|, |a_e|, relative phase of a_e)
    ("+z", 1.0, 0.0, 0.0),
    ("-z", 0.0, 1.0, 0.0),
    ("+x", FRAC_1_SQRT_2, FRAC_1_SQRT_2, 0.0),
    ("-x", FRAC_1_SQRT_2, FRAC_1_SQRT_2, PI),
    ("+y", FRAC_1_SQRT_2, FRAC_1_SQRT_2, 0.5 * PI),
    ("-y", FRAC_1_SQRT_2, FRAC_1_SQRT_2, -0.5 * PI),
];

/// Six-state average of <psi_i'| E(rho_i) |psi_i'> with psi_i' = T X psi_i,
/// where `target` maps (a_g, a_e) coefficients to the target ket.
pub fn fidelity_from_channel<T>(ch: &ChannelSamples, target: T) -> GateFidelityResult
where
    T: Fn(C64, C64) -> Array1<C64>,
{
    let mut breakdown = Vec::with_capacity(6);
    for (name, ag, ae, ph) in CARDINALS {
        let a = C64::new(ag, 0.0);
        let b = C64::from_polar(ae, ph);
        let rho = ch.gg.mapv(|z| z * a.norm_sqr()) + ch.ee.mapv(|z| z * b.norm_sqr()) + ch.ge.mapv(|z| z * (a * b.conj())) + linalg::dagger(&ch.ge).mapv(|z| z * (b * a.conj()));
        // X swaps the amplitudes.
        let psi = target(b, a);
        let f = psi.mapv(|z| z.conj()).dot(&rho.dot(&psi)).re;
        breakdown.push((name.to_string(), f));
    }
    let fidelity = breakdown.iter().map(|x| x.1).sum::<f64>() / 6.0;
    GateFidelityResult { fidelity, error: 1.0 - fidelity, breakdown }
}

fn outer(a: &Array1<C64>, b: &Array1<C64>) -> Array2<C64> {
    Array2::from_shape_fn((a.len(), b.len()), |(i, j)| a[i] * b[j].conj())
}

/// Integrates the gate with optional driven terms. With `driven`, the
/// target is displaced by the residual classical field at t_g.
pub fn average_gate_fidelity(sys: &GateSystem, gate: &GateSpec, driven: Option<&DrivenTerms>, cfg: &IntegratorConfig) -> Result<GateFidelityResult> {
    gate.validate()?;
    cfg.validate()?;
    let mut extra = vec![DriveTerm::real("gate", sys.model.qubit_drive_op.clone(), drag_hamiltonian(gate))];
    if let Some(d) = driven {
        extra.extend(d.terms.iter().cloned());
    }
    let gen = Generator::from_model(&sys.model, &extra, cfg.frame)?;
    let times = [0.0, gate.t_g];
    let run = |x0: Array2<C64>| -> Result<Array2<C64>> {
        let mut out = None;
        gen.propagate(&x0, 0.0, &times, &cfg.ode, |k, _, m| {
            if k == 1 {
                out = Some(m.clone());
            }
            Ok(())
        })?;
        out.ok_or_else(|| Error::IntegrationFailure { t: gate.t_g, reason: "no output".into() })
    };
    let (g, e) = (&sys.ground, &sys.excited);
    let ch = ChannelSamples { gg: run(outer(g, g))?, ee: run(outer(e, e))?, ge: run(outer(g, e))? };
    let shift = match driven {
        Some(d) => Some(super::displacement_product(sys.layout(), &d.residual_displacement(gate.t_g))?),
        None => None,
    };
    let (pg, pe) = match sys.target_frame {
        TargetFrame::Lab => (ONE, ONE),
        TargetFrame::Rotating => (C64::from_polar(1.0, -sys.energies.0 * gate.t_g), C64::from_polar(1.0, -sys.energies.1 * gate.t_g)),
    };
    Ok(fidelity_from_channel(&ch, |a, b| {
        let psi = g.mapv(|z| z * a * pg) + e.mapv(|z| z * b * pe);
        match &shift {
            Some(d) => d.matrix().dot(&psi),
            None => psi,
        }
    }))
}

/// Gate optimization over (eps_g, d_g, phi_g) without drives.
pub fn optimize_gate(sys: &GateSystem, guess: &GateSpec, nm: &NelderMeadConfig, cfg: &IntegratorConfig) -> Result<CalibrationResult> {
    guess.validate()?;
    let base = *guess;
    let objective = |x: &[f64]| -> Result<f64> {
        let g = GateSpec { eps_g: x[0], d_g: x[1], phi_g: x[2], ..base };
        Ok(average_gate_fidelity(sys, &g, None, cfg)?.error)
    };
    let r = nelder_mead(objective, &[guess.eps_g, guess.d_g, guess.phi_g], nm)?;
    Ok(CalibrationResult::from_nm(&["eps_g", "d_g", "phi_g"], r))
}

/// Swept quantity for the gate-error tables. Frequencies and amplitudes in
/// rad/ns; offsets are relative except the cavity-frequency offset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GateSweep {
    /// Error vs drive amplitude with the exact tone or no tone.
    DriveAmplitude { eps1: Vec<f64>, cancel: bool },
    /// Truncated tone built with a wrong cavity frequency.
    CavityFrequencyOffset { offsets: Vec<f64>, eps1: Vec<f64> },
    /// Full closed-form tone with phi_pm -> phi_pm (1 + d).
    PhaseOffset { offsets: Vec<f64>, eps1: Vec<f64> },
    /// Full closed-form tone with eps -> eps (1 + d).
    AmplitudeOffset { offsets: Vec<f64>, eps1: Vec<f64> },
    /// Single-frequency ansatz; drive and tone at each omega1.
    AnsatzFrequency { omega1: Vec<f64>, eps1: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub key: f64,
    pub eps1: f64,
    pub error: f64,
    /// |alpha(t_g)|^2 of the readout cavity.
    pub photons: f64,
}

fn readout_photons(sys: &GateSystem, d: &DrivenTerms, t: f64) -> Result<f64> {
    Ok(match sys.model.hybrid {
        Some(hy) => cloaking::hybrid_readout(&d.field, &hy, t).norm_sqr(),
        None => d.field.alpha(t).norm_sqr(),
    })
}

/// Error tables at drive frequency `omega1` (normally the readout frequency).
/// Rows are sorted by (eps1, key).
pub fn gate_error_sweeps(sys: &GateSystem, gate: &GateSpec, sweep: &GateSweep, omega1: f64, frame: FieldFrame, cfg: &IntegratorConfig) -> Result<Vec<SweepRow>> {
    let spec = &sys.spec;
    let port = sys.port();
    let kappa = spec.dissipation.kappa;
    let point = |eps: f64, w1: f64, tone: ToneChoice| -> Result<SweepRow> {
        let drive = DriveSpec::sine(port, eps, w1, 0.0);
        let field = super::classical_field(spec, &drive, gate.t_g)?;
        let tone = match tone {
            ToneChoice::None => None,
            ToneChoice::Exact => Some(super::exact_tone_for(spec, &field)?),
            ToneChoice::Closed(mc, truncated) => {
                let p = ClosedFormParams { eps1: eps, omega1: w1, phi1: 0.0, omega_r: spec.omega_r, kappa, g: spec.g, miscalibration: mc };
                Some(cloaking::closed_form_tone(&p, truncated))
            }
            ToneChoice::Ansatz => {
                let p = ClosedFormParams { eps1: eps, omega1: w1, phi1: 0.0, omega_r: spec.omega_r, kappa, g: spec.g, miscalibration: Miscalibration::default() };
                let (a, phi) = cloaking::ansatz_seed(&p);
                Some(cloaking::ansatz_tone(a, phi, w1, kappa))
            }
        };
        let d = driven_terms(spec, &drive, tone.as_ref(), frame, gate.t_g)?;
        let r = average_gate_fidelity(sys, gate, Some(&d), cfg)?;
        Ok(SweepRow { key: 0.0, eps1: eps, error: r.error, photons: readout_photons(sys, &d, gate.t_g)? })
    };
    let mut rows = Vec::new();
    let mc_closed = |eps1: &[f64], offsets: &[f64], mk: &dyn Fn(f64) -> ToneChoice| -> Result<Vec<SweepRow>> {
        let mut out = Vec::new();
        for &e in eps1 {
            for &o in offsets {
                out.push(SweepRow { key: o, ..point(e, omega1, mk(o))? });
            }
        }
        Ok(out)
    };
    match sweep {
        GateSweep::DriveAmplitude { eps1, cancel } => {
            for &e in eps1 {
                let tone = if *cancel && e != 0.0 { ToneChoice::Exact } else { ToneChoice::None };
                rows.push(SweepRow { key: e, ..point(e, omega1, tone)? });
            }
        }
        GateSweep::CavityFrequencyOffset { offsets, eps1 } => {
            if port == Port::Purcell {
                return Err(Error::VariantMismatch("closed-form tones need a single readout cavity".into()));
            }
            rows = mc_closed(eps1, offsets, &|o| ToneChoice::Closed(Miscalibration { omega_r_offset: o, ..Default::default() }, true))?;
        }
        GateSweep::PhaseOffset { offsets, eps1 } => {
            rows = mc_closed(eps1, offsets, &|o| ToneChoice::Closed(Miscalibration { delta_phi: o, ..Default::default() }, false))?;
        }
        GateSweep::AmplitudeOffset { offsets, eps1 } => {
            rows = mc_closed(eps1, offsets, &|o| ToneChoice::Closed(Miscalibration { delta_eps: o, ..Default::default() }, false))?;
        }
        GateSweep::AnsatzFrequency { omega1: ws, eps1 } => {
            for &w in ws {
                rows.push(SweepRow { key: w, ..point(*eps1, w, ToneChoice::Ansatz)? });
            }
        }
    }
    rows.sort_by(|a, b| a.eps1.total_cmp(&b.eps1).then(a.key.total_cmp(&b.key)));
    Ok(rows)
}

#[derive(Clone, Copy)]
enum ToneChoice {
    None,
    Exact,
    Closed(Miscalibration, bool),
    Ansatz,
}

/// Injects a unitary on the full space as the channel (test hook).
pub fn unitary_channel(sys: &GateSystem, u: &Operator) -> ChannelSamples {
    let m = u.matrix();
    let conj = |x: Array2<C64>| m.dot(&x).dot(&linalg::dagger(m));
    let (g, e) = (&sys.ground, &sys.excited);
    ChannelSamples { gg: conj(outer(g, g)), ee: conj(outer(e, e)), ge: conj(outer(g, e)) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DissipationSpec;
    use crate::transmon::TransmonParams;
    use crate::units::{ghz, mhz};

    fn sm_system(cav: usize) -> GateSystem {
        let p = TransmonParams::new(16.826 / 84.28, 16.826).unwrap();
        let spec = SystemSpec::transmon_cosine(p, ghz(7.657), mhz(140.6), 3, cav, DissipationSpec::cavity(mhz(10.1)));
        GateSystem::new(&spec, TargetFrame::Lab).unwrap()
    }

    #[test]
    fn envelope_values() {
        let g = GateSpec { t_g: 25.0, eps_g: 1.3, d_g: 0.0, phi_g: 0.0, carrier: 30.0 };
        assert!((g.coefficient(12.5) - 1.3 * (30.0f64 * 12.5).sin()).abs() < 1e-12);
        let (m0, _) = g.envelope(0.0);
        assert!((m0 - 1.0 / (2.0 * (0.5 * PI).sqrt()).cosh()).abs() < 1e-12);
        assert!((m0 - 0.1619).abs() < 1e-3);
        for t in [1.0, 4.0, 9.0] {
            let (a, b) = g.envelope(12.5 - t);
            let (c, d) = g.envelope(12.5 + t);
            assert!((a - c).abs() < 1e-14 && (b + d).abs() < 1e-14);
        }
        assert_eq!(g.coefficient(-0.1), 0.0);
        assert_eq!(g.coefficient(25.1), 0.0);
    }

    #[test]
    fn perfect_x_gives_unit_fidelity() {
        let sys = sm_system(3);
        let n = sys.model.dim();
        let (g, e) = (&sys.ground, &sys.excited);
        let mut u = Array2::<C64>::eye(n) - outer(g, g) - outer(e, e);
        u = u + outer(g, e) + outer(e, g);
        let ch = unitary_channel(&sys, &Operator::new(sys.layout().clone(), u).unwrap());
        let r = fidelity_from_channel(&ch, |a, b| g.mapv(|z| z * a) + e.mapv(|z| z * b));
        assert!((r.fidelity - 1.0).abs() < 1e-12);
        let mean = r.breakdown.iter().map(|x| x.1).sum::<f64>() / 6.0;
        assert_eq!(mean, r.fidelity);
        // Identity: z states fail, x states pass, y states fail.
        let id = unitary_channel(&sys, &Operator::identity(sys.layout()));
        let r = fidelity_from_channel(&id, |a, b| g.mapv(|z| z * a) + e.mapv(|z| z * b));
        assert!((r.fidelity - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn idle_gate_is_not_a_flip() {
        let sys = sm_system(3);
        let gate = GateSpec { t_g: 5.0, eps_g: 0.0, d_g: 0.0, phi_g: 0.0, carrier: sys.omega_q() };
        let r = average_gate_fidelity(&sys, &gate, None, &IntegratorConfig::default()).unwrap();
        assert!(r.fidelity < 0.5, "{}", r.fidelity);
    }
}
