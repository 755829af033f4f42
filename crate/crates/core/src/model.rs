// SPDX-License-Identifier: Apache-2.0
//! Hamiltonians and collapse operators for the four system variants.

use crate::hilbert::{annihilation, embed, qubit, Operator, SpaceLayout};
use crate::linalg::{self, I, ONE};
use crate::transmon::{self, TransmonModes, TransmonParams};
use crate::{Error, Result, C64};
use ndarray::{Array1, Array2};
use std::f64::consts::{FRAC_PI_2, TAU};
use std::fmt;
use std::sync::Arc;

pub const QUBIT: &str = "qubit";
pub const CAVITY: &str = "cavity";
pub const PLUS: &str = "plus";
pub const MINUS: &str = "minus";

pub type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type ComplexFn = Arc<dyn Fn(f64) -> C64 + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    TlsRwa,
    TransmonCosine,
    TransmonPurcell,
    GeneralMultilevel,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Port {
    Cavity,
    Qubit,
    Purcell,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Waveform {
    /// eps(t) sin(w t + phi)
    Sine,
    /// eps(t) cos(w t + phi)
    Cosine,
    /// -(eps(t)/2)(a^dag e^{-i(w t + phi)} + h.c.)
    ComplexRwa,
}

#[derive(Clone)]
pub enum Envelope {
    Constant(f64),
    /// Amplitude `amp` on [t_on, t_off), zero elsewhere.
    Window { amp: f64, t_on: f64, t_off: f64 },
    Custom(RealFn),
}

impl Envelope {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Envelope::Constant(a) => *a,
            Envelope::Window { amp, t_on, t_off } => {
                if t >= *t_on && t < *t_off {
                    *amp
                } else {
                    0.0
                }
            }
            Envelope::Custom(f) => f(t),
        }
    }

    /// Times at which the envelope may jump.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            Envelope::Window { t_on, t_off, .. } => vec![*t_on, *t_off],
            _ => vec![],
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Envelope::Constant(a) if *a == 0.0) || matches!(self, Envelope::Window { amp, .. } if *amp == 0.0)
    }
}

impl fmt::Debug for Envelope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Envelope::Constant(a) => write!(f, "Constant({a})"),
            Envelope::Window { amp, t_on, t_off } => write!(f, "Window({amp}, {t_on}..{t_off})"),
            Envelope::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// A classical drive. Amplitudes and frequencies in rad/ns.
#[derive(Clone, Debug)]
pub struct DriveSpec {
    pub port: Port,
    pub envelope: Envelope,
    pub carrier: f64,
    pub phase: f64,
    pub waveform: Waveform,
}

impl DriveSpec {
    pub fn sine(port: Port, eps: f64, carrier: f64, phase: f64) -> Self {
        DriveSpec { port, envelope: Envelope::Constant(eps), carrier, phase, waveform: Waveform::Sine }
    }

    /// Forcing F(t) of a bosonic port, H = i(F b^dag - F^* b), so that the
    /// classical amplitude obeys  b' = -(i w + k/2) b + F.
    pub fn forcing(&self, t: f64) -> C64 {
        let e = self.envelope.eval(t);
        let x = self.carrier * t + self.phase;
        match self.waveform {
            Waveform::Sine => C64::new(e * x.sin(), 0.0),
            Waveform::Cosine => C64::new(e * x.cos(), 0.0),
            Waveform::ComplexRwa => I * (0.5 * e) * C64::from_polar(1.0, -x),
        }
    }

    /// Real amplitude of a qubit-port drive (sine/cosine waveforms).
    pub fn real_amplitude(&self, t: f64) -> f64 {
        let e = self.envelope.eval(t);
        let x = self.carrier * t + self.phase;
        match self.waveform {
            Waveform::Sine => e * x.sin(),
            Waveform::Cosine => e * x.cos(),
            Waveform::ComplexRwa => e * x.cos(),
        }
    }

    pub fn validate(&self, t_probe: &[f64]) -> Result<()> {
        if !self.carrier.is_finite() || !self.phase.is_finite() {
            return Err(Error::InvalidParameter("drive carrier/phase not finite".into()));
        }
        if t_probe.iter().any(|&t| !self.envelope.eval(t).is_finite()) {
            return Err(Error::InvalidParameter("drive envelope not finite on the window".into()));
        }
        Ok(())
    }
}

/// Rates in rad/ns.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DissipationSpec {
    pub kappa: f64,
    pub kappa_f: f64,
    pub gamma: f64,
    pub gamma_phi: f64,
    pub n_th: f64,
}

impl DissipationSpec {
    pub fn cavity(kappa: f64) -> Self {
        DissipationSpec { kappa, ..Default::default() }
    }

    fn validate(&self) -> Result<()> {
        for (n, v) in [("kappa", self.kappa), ("kappa_f", self.kappa_f), ("gamma", self.gamma), ("gamma_phi", self.gamma_phi), ("n_th", self.n_th)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{n} = {v} must be >= 0")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dims {
    /// Qubit levels (2 for the two-level variant).
    pub qubit: usize,
    /// Readout cavity Fock states (plus-mode for the Purcell variant).
    pub cavity: usize,
    /// Minus-mode Fock states, Purcell variant only.
    pub minus: usize,
}

impl Default for Dims {
    fn default() -> Self {
        Dims { qubit: 5, cavity: 20, minus: 8 }
    }
}

#[derive(Clone, Debug)]
pub struct SystemSpec {
    pub variant: Variant,
    pub transmon: Option<TransmonParams>,
    pub charge_cutoff: usize,
    /// Qubit frequency for the two-level variant.
    pub omega_q: Option<f64>,
    pub omega_r: f64,
    pub omega_f: Option<f64>,
    /// Charge coupling g; for the two-level variant this is g'.
    pub g: f64,
    pub j_coupling: Option<f64>,
    pub coupling_phase: Option<f64>,
    pub h_q: Option<Operator>,
    pub o_q: Option<Operator>,
    pub dims: Dims,
    pub drives: Vec<DriveSpec>,
    pub dissipation: DissipationSpec,
}

impl SystemSpec {
    pub fn tls_rwa(omega_q: f64, omega_r: f64, g_prime: f64, cavity_dim: usize, dissipation: DissipationSpec) -> Self {
        SystemSpec {
            variant: Variant::TlsRwa,
            transmon: None,
            charge_cutoff: transmon::DEFAULT_CHARGE_CUTOFF,
            omega_q: Some(omega_q),
            omega_r,
            omega_f: None,
            g: g_prime,
            j_coupling: None,
            coupling_phase: None,
            h_q: None,
            o_q: None,
            dims: Dims { qubit: 2, cavity: cavity_dim, minus: 0 },
            drives: vec![],
            dissipation,
        }
    }

    pub fn transmon_cosine(params: TransmonParams, omega_r: f64, g: f64, levels: usize, cavity_dim: usize, dissipation: DissipationSpec) -> Self {
        SystemSpec {
            variant: Variant::TransmonCosine,
            transmon: Some(params),
            dims: Dims { qubit: levels, cavity: cavity_dim, minus: 0 },
            omega_q: None,
            ..Self::tls_rwa(0.0, omega_r, g, cavity_dim, dissipation)
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn transmon_purcell(
        params: TransmonParams,
        omega_r: f64,
        omega_f: f64,
        g: f64,
        j: f64,
        levels: usize,
        mode_dims: (usize, usize),
        dissipation: DissipationSpec,
    ) -> Self {
        SystemSpec {
            variant: Variant::TransmonPurcell,
            transmon: Some(params),
            omega_f: Some(omega_f),
            j_coupling: Some(j),
            dims: Dims { qubit: levels, cavity: mode_dims.0, minus: mode_dims.1 },
            omega_q: None,
            ..Self::tls_rwa(0.0, omega_r, g, mode_dims.0, dissipation)
        }
    }

    pub fn general(h_q: Operator, o_q: Operator, omega_r: f64, g: f64, phase: f64, cavity_dim: usize, dissipation: DissipationSpec) -> Self {
        SystemSpec {
            variant: Variant::GeneralMultilevel,
            dims: Dims { qubit: h_q.dim(), cavity: cavity_dim, minus: 0 },
            h_q: Some(h_q),
            o_q: Some(o_q),
            coupling_phase: Some(phase),
            omega_q: None,
            ..Self::tls_rwa(0.0, omega_r, g, cavity_dim, dissipation)
        }
    }

    pub fn with_drive(mut self, d: DriveSpec) -> Self {
        self.drives.push(d);
        self
    }

    pub fn without_drives(&self) -> Self {
        SystemSpec { drives: vec![], ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        self.dissipation.validate()?;
        let mismatch = |m: &str| Err(Error::VariantMismatch(format!("{m} for {:?}", self.variant)));
        if !self.g.is_finite() || !self.omega_r.is_finite() {
            return Err(Error::InvalidParameter("g and omega_r must be finite".into()));
        }
        if self.dims.cavity < 2 {
            return Err(Error::InvalidDimension { dim: self.dims.cavity, reason: "cavity needs >= 2 Fock states".into() });
        }
        let purcell = self.variant == Variant::TransmonPurcell;
        if !purcell && (self.j_coupling.is_some() || self.omega_f.is_some()) {
            return mismatch("J/omega_f set");
        }
        if purcell && (self.j_coupling.is_none() || self.omega_f.is_none()) {
            return mismatch("J/omega_f missing");
        }
        if purcell && self.dims.minus < 2 {
            return Err(Error::InvalidDimension { dim: self.dims.minus, reason: "minus mode needs >= 2 Fock states".into() });
        }
        if !purcell && self.dissipation.kappa_f > 0.0 {
            return mismatch("kappa_f set");
        }
        if !purcell && self.drives.iter().any(|d| d.port == Port::Purcell) {
            return mismatch("Purcell-port drive");
        }
        let general = self.variant == Variant::GeneralMultilevel;
        if !general && (self.h_q.is_some() || self.o_q.is_some() || self.coupling_phase.is_some()) {
            return mismatch("H_q/O_q/coupling phase set");
        }
        match self.variant {
            Variant::TlsRwa => {
                if self.transmon.is_some() {
                    return mismatch("transmon parameters set");
                }
                if self.omega_q.is_none() {
                    return mismatch("omega_q missing");
                }
                if self.dims.qubit != 2 {
                    return Err(Error::InvalidDimension { dim: self.dims.qubit, reason: "two-level variant needs qubit dim 2".into() });
                }
            }
            Variant::TransmonCosine | Variant::TransmonPurcell => {
                if self.omega_q.is_some() {
                    return mismatch("omega_q set");
                }
                self.transmon.ok_or_else(|| Error::VariantMismatch("transmon parameters missing".into()))?.validate()?;
                if self.dims.qubit < 2 {
                    return Err(Error::InvalidDimension { dim: self.dims.qubit, reason: "transmon needs >= 2 levels".into() });
                }
                if self.drives.iter().any(|d| d.waveform == Waveform::ComplexRwa) {
                    return mismatch("complex-RWA waveform");
                }
            }
            Variant::GeneralMultilevel => {
                if self.transmon.is_some() || self.omega_q.is_some() {
                    return mismatch("transmon/omega_q set");
                }
                let (h, o) = match (&self.h_q, &self.o_q) {
                    (Some(h), Some(o)) => (h, o),
                    _ => return mismatch("H_q/O_q missing"),
                };
                if self.coupling_phase.is_none() {
                    return mismatch("coupling phase missing");
                }
                if h.dim() != self.dims.qubit || o.dim() != self.dims.qubit {
                    return Err(Error::DimensionMismatch { expected: self.dims.qubit, found: o.dim() });
                }
                if !h.is_hermitian(1e-12) || !o.is_hermitian(1e-12) {
                    return Err(Error::InvalidParameter("H_q and O_q must be Hermitian".into()));
                }
            }
        }
        Ok(())
    }

    pub fn layout(&self) -> Result<SpaceLayout> {
        match self.variant {
            Variant::TransmonPurcell => SpaceLayout::new(vec![(QUBIT, self.dims.qubit), (PLUS, self.dims.cavity), (MINUS, self.dims.minus)]),
            _ => SpaceLayout::new(vec![(QUBIT, self.dims.qubit), (CAVITY, self.dims.cavity)]),
        }
    }
}

/// H(t) contribution: `op * Re c(t)` (unpaired, op Hermitian) or
/// `c(t) op + c(t)^* op^dag` (paired).
#[derive(Clone)]
pub struct DriveTerm {
    pub label: String,
    pub op: Operator,
    pub coeff: ComplexFn,
    pub paired: bool,
}

impl DriveTerm {
    pub fn real(label: &str, op: Operator, f: RealFn) -> Self {
        DriveTerm { label: label.into(), op, coeff: Arc::new(move |t| C64::new(f(t), 0.0)), paired: false }
    }

    pub fn complex(label: &str, op: Operator, f: ComplexFn) -> Self {
        DriveTerm { label: label.into(), op, coeff: f, paired: true }
    }

    /// Hermitian matrix of this term at time t.
    pub fn at(&self, t: f64) -> Array2<C64> {
        let c = (self.coeff)(t);
        if self.paired {
            let m = self.op.matrix().mapv(|z| z * c);
            &m + &linalg::dagger(&m)
        } else {
            self.op.matrix().mapv(|z| z * c.re)
        }
    }
}

impl fmt::Debug for DriveTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DriveTerm({}, paired={})", self.label, self.paired)
    }
}

/// Assembled model.
#[derive(Clone, Debug)]
pub struct BuiltModel {
    pub variant: Variant,
    pub layout: SpaceLayout,
    pub h_static: Operator,
    pub drives: Vec<DriveTerm>,
    pub collapse: Vec<Operator>,
    /// Operator the cancellation tone multiplies: n_tr, O_q, or sigma^+ (two-level).
    pub qubit_drive_op: Operator,
    /// Readout-cavity annihilation operator embedded in the full space.
    pub cavity_a: Operator,
    /// Purcell-mode annihilation operator (Purcell variant).
    pub filter_f: Option<Operator>,
    /// Coupling constant g (g' for the two-level variant).
    pub g: f64,
    pub transmon: Option<TransmonModes>,
    pub hybrid: Option<HybridizedPurcell>,
}

impl BuiltModel {
    pub fn dim(&self) -> usize {
        self.layout.total_dim()
    }

    /// Projector onto bare qubit level `k`.
    pub fn qubit_projector(&self, k: usize) -> Result<Operator> {
        let d = self.layout.factor_dim(QUBIT)?;
        let mut p = Array2::zeros((d, d));
        p[[k, k]] = ONE;
        embed(&Operator::from_matrix(p)?, &self.layout, QUBIT)
    }

    pub fn cavity_number(&self) -> Operator {
        &self.cavity_a.adjoint() * &self.cavity_a
    }

    /// Full Hamiltonian matrix at time t (static + drives).
    pub fn hamiltonian_at(&self, t: f64) -> Array2<C64> {
        let mut h = self.h_static.matrix().clone();
        for d in &self.drives {
            h = h + d.at(t);
        }
        h
    }
}

fn cavity_thermal(a: &Operator, kappa: f64, n_th: f64, out: &mut Vec<Operator>) {
    if kappa > 0.0 {
        out.push(a.scale_re((kappa * (n_th + 1.0)).sqrt()));
        if n_th > 0.0 {
            out.push(a.adjoint().scale_re((kappa * n_th).sqrt()));
        }
    }
}

fn port_term(d: &DriveSpec, b: &Operator, label: &str) -> DriveTerm {
    let dd = d.clone();
    DriveTerm::complex(label, b.adjoint(), Arc::new(move |t| I * dd.forcing(t)))
}

pub fn build(spec: &SystemSpec) -> Result<BuiltModel> {
    spec.validate()?;
    let layout = spec.layout()?;
    let dis = spec.dissipation;
    let mut collapse = Vec::new();
    let mut transmon_modes = None;
    let mut hybrid = None;
    let mut filter_f = None;
    let (h_static, qubit_drive_op, cavity_a) = match spec.variant {
        Variant::TlsRwa => {
            let wq = spec.omega_q.unwrap();
            let sz = embed(&qubit::sigma_z(), &layout, QUBIT)?;
            let sp = embed(&qubit::sigma_plus(), &layout, QUBIT)?;
            let a = embed(&annihilation(spec.dims.cavity)?, &layout, CAVITY)?;
            let n = &a.adjoint() * &a;
            let jc = &(&sp * &a) + &(&sp * &a).adjoint();
            let h = &(&sz.scale_re(0.5 * wq) + &n.scale_re(spec.omega_r)) + &jc.scale_re(spec.g);
            let sm = sp.adjoint();
            if dis.gamma > 0.0 {
                collapse.push(sm.scale_re(dis.gamma.sqrt()));
            }
            if dis.gamma_phi > 0.0 {
                collapse.push((&sp * &sm).scale_re((2.0 * dis.gamma_phi).sqrt()));
            }
            cavity_thermal(&a, dis.kappa, dis.n_th, &mut collapse);
            (h, sp, a)
        }
        Variant::TransmonCosine | Variant::TransmonPurcell => {
            let p = spec.transmon.unwrap();
            let modes = transmon::diagonalize(&p, spec.charge_cutoff, spec.dims.qubit)?;
            let hq = Array2::from_diag(&Array1::from_iter(modes.energies.iter().map(|e| C64::new(TAU * e, 0.0))));
            let hq = embed(&Operator::from_matrix(hq)?, &layout, QUBIT)?;
            let nq = embed(&Operator::from_matrix(modes.n_matrix.clone())?, &layout, QUBIT)?;
            let d = embed(&Operator::from_matrix(modes.lowering.clone())?, &layout, QUBIT)?;
            if dis.gamma > 0.0 {
                collapse.push(d.scale_re(dis.gamma.sqrt()));
            }
            if dis.gamma_phi > 0.0 {
                collapse.push((&d.adjoint() * &d).scale_re((2.0 * dis.gamma_phi).sqrt()));
            }
            let out = if spec.variant == Variant::TransmonCosine {
                let a = embed(&annihilation(spec.dims.cavity)?, &layout, CAVITY)?;
                let n = &a.adjoint() * &a;
                let coup = (&a.adjoint() - &a).scale(I * spec.g);
                let coup = &nq * &coup;
                cavity_thermal(&a, dis.kappa, dis.n_th, &mut collapse);
                (&(&hq + &n.scale_re(spec.omega_r)) + &coup, nq, a)
            } else {
                let hy = hybridize(spec.omega_r, spec.omega_f.unwrap(), spec.j_coupling.unwrap())?;
                let ap = embed(&annihilation(spec.dims.cavity)?, &layout, PLUS)?;
                let am = embed(&annihilation(spec.dims.minus)?, &layout, MINUS)?;
                let (c, s) = (hy.cos_half, hy.sin_half);
                let a = &ap.scale_re(c) - &am.scale_re(s);
                let f = &ap.scale_re(s) + &am.scale_re(c);
                let modes_h = &(&ap.adjoint() * &ap).scale_re(hy.omega_plus) + &(&am.adjoint() * &am).scale_re(hy.omega_minus);
                let coup = &nq * &(&a.adjoint() - &a).scale(I * spec.g);
                cavity_thermal(&f, dis.kappa_f, dis.n_th, &mut collapse);
                cavity_thermal(&a, dis.kappa, dis.n_th, &mut collapse);
                filter_f = Some(f);
                hybrid = Some(hy);
                (&(&hq + &modes_h) + &coup, nq, a)
            };
            transmon_modes = Some(modes);
            out
        }
        Variant::GeneralMultilevel => {
            let hq = embed(spec.h_q.as_ref().unwrap(), &layout, QUBIT)?;
            let oq = embed(spec.o_q.as_ref().unwrap(), &layout, QUBIT)?;
            let a = embed(&annihilation(spec.dims.cavity)?, &layout, CAVITY)?;
            let phi = spec.coupling_phase.unwrap();
            let field = &a.adjoint().scale(C64::from_polar(1.0, -phi)) + &a.scale(C64::from_polar(1.0, phi));
            let h = &(&hq + &(&a.adjoint() * &a).scale_re(spec.omega_r)) + &(&oq * &field).scale_re(spec.g);
            cavity_thermal(&a, dis.kappa, dis.n_th, &mut collapse);
            (h, oq, a)
        }
    };
    let mut drives = Vec::new();
    for (k, d) in spec.drives.iter().enumerate() {
        let label = format!("drive{k}");
        let term = match d.port {
            Port::Cavity => port_term(d, &cavity_a, &label),
            Port::Purcell => port_term(d, filter_f.as_ref().unwrap(), &label),
            Port::Qubit => {
                let dd = d.clone();
                if spec.variant == Variant::TlsRwa {
                    if d.waveform == Waveform::ComplexRwa {
                        DriveTerm::complex(&label, qubit_drive_op.clone(), Arc::new(move |t| {
                            C64::from_polar(-0.5 * dd.envelope.eval(t), -(dd.carrier * t + dd.phase))
                        }))
                    } else {
                        let sx = &qubit_drive_op + &qubit_drive_op.adjoint();
                        DriveTerm::real(&label, sx, Arc::new(move |t| dd.real_amplitude(t)))
                    }
                } else {
                    DriveTerm::real(&label, qubit_drive_op.clone(), Arc::new(move |t| dd.real_amplitude(t)))
                }
            }
        };
        drives.push(term);
    }
    let h_static = h_static;
    debug_assert!(h_static.is_hermitian(1e-12));
    Ok(BuiltModel {
        variant: spec.variant,
        layout,
        h_static,
        drives,
        collapse,
        qubit_drive_op,
        cavity_a,
        filter_f,
        g: spec.g,
        transmon: transmon_modes,
        hybrid,
    })
}

/// Normal modes of two linearly coupled oscillators.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HybridizedPurcell {
    /// Mixing angle in (-pi/2, pi/2] with tan(theta) = 2J/(w_r - w_f).
    pub theta: f64,
    pub omega_plus: f64,
    pub omega_minus: f64,
    /// Weight of the readout mode in a_+ (a_+ = cos_half a + sin_half f).
    pub cos_half: f64,
    /// Weight of the filter mode in a_+.
    pub sin_half: f64,
}

pub fn hybridize(omega_r: f64, omega_f: f64, j: f64) -> Result<HybridizedPurcell> {
    let delta = omega_r - omega_f;
    if delta == 0.0 && j == 0.0 {
        return Err(Error::UndefinedMixingAngle);
    }
    let theta = if delta == 0.0 { FRAC_PI_2 } else { (2.0 * j / delta).atan() };
    let root = (delta * delta + 4.0 * j * j).sqrt();
    // The eigenvector with eigenvalue w_+ is (cos, sin) of half of atan2(2J, delta).
    let full = (2.0 * j).atan2(delta);
    Ok(HybridizedPurcell {
        theta,
        omega_plus: 0.5 * (omega_r + omega_f) + 0.5 * root,
        omega_minus: 0.5 * (omega_r + omega_f) - 0.5 * root,
        cos_half: (0.5 * full).cos(),
        sin_half: (0.5 * full).sin(),
    })
}

/// Dressed spectrum data of the undriven Hamiltonian.
#[derive(Clone, Debug)]
pub struct DressedData {
    pub omega_r: f64,
    pub omega_q: f64,
    pub chi_g: f64,
    pub chi_e: f64,
    pub chi: f64,
    /// Readout frequency w_r + (chi_g + chi_e)/2.
    pub omega_ro: f64,
    /// (bare product index, eigenvector index, overlap)
    pub index_map: Vec<(Vec<usize>, usize, f64)>,
    pub eigenvalues: Array1<f64>,
    pub eigenvectors: Array2<C64>,
}

impl DressedData {
    pub fn eigen_index(&self, bare: &[usize]) -> Result<usize> {
        self.index_map
            .iter()
            .find(|(b, _, _)| b.as_slice() == bare)
            .map(|e| e.1)
            .ok_or_else(|| Error::LabelNotFound(format!("{bare:?}")))
    }

    /// Dressed eigenvector labelled by its dominant bare component, with the
    /// phase chosen so that this component is real positive.
    pub fn state(&self, layout: &SpaceLayout, bare: &[usize]) -> Result<Array1<C64>> {
        let k = self.eigen_index(bare)?;
        let v = self.eigenvectors.column(k).to_owned();
        let c = v[layout.flat_index(bare)];
        let ph = c.conj() / c.norm();
        Ok(v.mapv(|z| z * ph))
    }

    pub fn energy(&self, bare: &[usize]) -> Result<f64> {
        Ok(self.eigenvalues[self.eigen_index(bare)?])
    }
}

/// Labels tracked by the index map: qubit level < 3 and every mode < 3.
fn tracked_labels(layout: &SpaceLayout) -> Vec<Vec<usize>> {
    let dims = layout.dims();
    let caps: Vec<usize> = dims.iter().map(|&d| d.min(3)).collect();
    let total: usize = caps.iter().product();
    (0..total)
        .map(|mut f| {
            let mut idx = vec![0; caps.len()];
            for k in (0..caps.len()).rev() {
                idx[k] = f % caps[k];
                f /= caps[k];
            }
            idx
        })
        .filter(|idx| idx[1..].iter().sum::<usize>() <= 1 && idx[0] <= 1 || idx[1..].iter().sum::<usize>() == 0)
        .collect()
}

pub fn dressed_quantities(spec: &SystemSpec) -> Result<DressedData> {
    let m = build(&spec.without_drives())?;
    let (w, v) = linalg::eigh(m.h_static.matrix())?;
    let mut index_map: Vec<(Vec<usize>, usize, f64)> = Vec::new();
    for label in tracked_labels(&m.layout) {
        let flat = m.layout.flat_index(&label);
        let (best, ov) = (0..w.len()).map(|k| (k, v[[flat, k]].norm_sqr())).fold((0, -1.0), |a, b| if b.1 > a.1 { b } else { a });
        if ov < 0.5 {
            return Err(Error::BranchIdentification { label: format!("{label:?}"), overlap: ov });
        }
        if index_map.iter().any(|e| e.1 == best) {
            return Err(Error::BranchIdentification { label: format!("{label:?} (duplicate)"), overlap: ov });
        }
        index_map.push((label, best, ov));
    }
    let nmodes = m.layout.dims().len() - 1;
    let lab = |q: usize, n: usize| -> Vec<usize> {
        let mut l = vec![q];
        l.extend((0..nmodes).map(|k| if k == 0 { n } else { 0 }));
        l
    };
    let e = |q: usize, n: usize| -> Result<f64> {
        let k = index_map.iter().find(|x| x.0 == lab(q, n)).map(|x| x.1).ok_or_else(|| Error::LabelNotFound(format!("{:?}", lab(q, n))))?;
        Ok(w[k])
    };
    let wr_g = e(0, 1)? - e(0, 0)?;
    let wr_e = e(1, 1)? - e(1, 0)?;
    let wr = 0.5 * (wr_g + wr_e);
    let chi_g = wr_g - wr;
    let chi_e = wr_e - wr;
    Ok(DressedData {
        omega_r: wr,
        omega_q: e(1, 0)? - e(0, 0)?,
        chi_g,
        chi_e,
        chi: chi_e - chi_g,
        omega_ro: wr + 0.5 * (chi_g + chi_e),
        index_map,
        eigenvalues: w,
        eigenvectors: v,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ZERO;
    use crate::units::{ghz, mhz};

    fn fig3b(cav: usize, levels: usize) -> SystemSpec {
        SystemSpec::transmon_cosine(TransmonParams::new(0.1997, 16.83).unwrap(), ghz(7.66), mhz(140.6), levels, cav, DissipationSpec::cavity(mhz(10.1)))
    }

    #[test]
    fn tls_single_excitation_splitting() {
        let (wq, wr, gp) = (ghz(5.7), ghz(7.6), mhz(200.0));
        let m = build(&SystemSpec::tls_rwa(wq, wr, gp, 4, DissipationSpec::cavity(mhz(50.0)))).unwrap();
        let w = linalg::eigvalsh(m.h_static.matrix()).unwrap();
        // Ground -wq/2; single-excitation pair centred at (wr - wq/2 + wq/2 ... ) : take indices 1, 2.
        let split = w[2] - w[1];
        let d = wq - wr;
        assert!((split - (d * d + 4.0 * gp * gp).sqrt()).abs() < 1e-10 * split);
    }

    #[test]
    fn tls_resonant_vacuum_rabi_splitting() {
        let gp = 0.3;
        let m = build(&SystemSpec::tls_rwa(5.0, 5.0, gp, 5, DissipationSpec::default())).unwrap();
        let w = linalg::eigvalsh(m.h_static.matrix()).unwrap();
        assert!((w[2] - w[1] - 2.0 * gp).abs() < 1e-10);
    }

    #[test]
    fn zero_coupling_block_diagonal() {
        let mut s = fig3b(5, 3);
        s.g = 0.0;
        let m = build(&s).unwrap();
        let h = m.h_static.matrix();
        for i in 0..h.nrows() {
            for j in 0..h.ncols() {
                if i != j {
                    assert_eq!(h[[i, j]], ZERO);
                }
            }
        }
        assert_eq!(m.collapse.len(), 1);
    }

    #[test]
    fn thermal_collapse_pair() {
        let mut s = fig3b(5, 3);
        s.dissipation.n_th = 0.1;
        let m = build(&s).unwrap();
        assert_eq!(m.collapse.len(), 2);
        let k = s.dissipation.kappa;
        let r0 = m.collapse[0].matrix()[[0, 1]].norm().powi(2);
        let r1 = m.collapse[1].matrix()[[1, 0]].norm().powi(2);
        assert!((r0 - k * 1.1).abs() < 1e-14 && (r1 - k * 0.1).abs() < 1e-14);
    }

    #[test]
    fn variant_field_mismatch() {
        let mut s = fig3b(5, 3);
        s.j_coupling = Some(0.1);
        assert!(matches!(build(&s), Err(Error::VariantMismatch(_))));
        let mut s = SystemSpec::tls_rwa(1.0, 1.0, 0.1, 4, DissipationSpec::default());
        s.dims.qubit = 3;
        assert!(build(&s).is_err());
    }

    #[test]
    fn hermitian_at_random_times() {
        let s = fig3b(6, 3).with_drive(DriveSpec::sine(Port::Cavity, mhz(20.0), ghz(7.6648), 0.3)).with_drive(DriveSpec::sine(Port::Qubit, mhz(5.0), ghz(4.9), 0.0));
        let m = build(&s).unwrap();
        for k in 0..50 {
            let t = 0.731 * k as f64;
            let h = m.hamiltonian_at(t);
            let defect = linalg::max_abs((&h - &linalg::dagger(&h)).view());
            assert!(defect < 1e-12 * linalg::max_abs(h.view()));
        }
    }

    #[test]
    fn hybridize_cases() {
        let h = hybridize(2.0, 1.0, 0.0).unwrap();
        assert_eq!(h.theta, 0.0);
        assert_eq!((h.omega_plus, h.omega_minus), (2.0, 1.0));
        let h = hybridize(1.0, 1.0, 0.2).unwrap();
        assert!((h.theta - FRAC_PI_2).abs() < 1e-15);
        assert!((h.omega_plus - h.omega_minus - 0.4).abs() < 1e-15);
        assert!(matches!(hybridize(1.0, 1.0, 0.0), Err(Error::UndefinedMixingAngle)));
        let h = hybridize(ghz(7.64744), ghz(7.63166), mhz(26.14)).unwrap();
        assert!((h.omega_plus / TAU - 7.6669).abs() < 1e-4, "{}", h.omega_plus / TAU);
        assert!((h.omega_minus / TAU - 7.6122).abs() < 1e-4, "{}", h.omega_minus / TAU);
    }

    #[test]
    fn dressed_zero_coupling() {
        let mut s = fig3b(5, 3);
        s.g = 0.0;
        let d = dressed_quantities(&s).unwrap();
        assert_eq!(d.chi_g, 0.0);
        assert_eq!(d.chi_e, 0.0);
        assert!((d.omega_r - ghz(7.66)).abs() < 1e-12);
        let modes = transmon::diagonalize(&s.transmon.unwrap(), 30, 3).unwrap();
        assert!((d.omega_q - TAU * modes.omega_01()).abs() < 1e-12);
    }

    #[test]
    fn dressed_chi_fig3b() {
        let d = dressed_quantities(&fig3b(10, 5)).unwrap();
        let chi = d.chi / TAU * 1e3;
        assert!((chi + 2.54).abs() < 0.2 * 2.54, "chi/2pi = {chi} MHz");
        assert!((d.chi_g + d.chi_e).abs() < 1e-12);
    }

    #[test]
    fn tls_dispersive_formula() {
        let (wq, wr, gp) = (5.0, 6.0, 0.02);
        let d = dressed_quantities(&SystemSpec::tls_rwa(wq, wr, gp, 4, DissipationSpec::default())).unwrap();
        let want = 2.0 * gp * gp / (wq - wr);
        assert!((d.chi - want).abs() < 0.1 * want.abs(), "{} vs {}", d.chi, want);
    }

    #[test]
    fn dressed_map_stable_under_small_perturbation() {
        let s = fig3b(8, 4);
        let mut s2 = s.clone();
        s2.g *= 1.0 + 1e-6;
        let a = dressed_quantities(&s).unwrap();
        let b = dressed_quantities(&s2).unwrap();
        let ia: Vec<_> = a.index_map.iter().map(|e| (e.0.clone(), e.1)).collect();
        let ib: Vec<_> = b.index_map.iter().map(|e| (e.0.clone(), e.1)).collect();
        assert_eq!(ia, ib);
    }

    #[test]
    fn purcell_build_and_dressed() {
        let s = SystemSpec::transmon_purcell(
            TransmonParams::new(0.20809, 16.23).unwrap(),
            ghz(7.64744),
            ghz(7.63166),
            mhz(166.85),
            mhz(26.14),
            3,
            (4, 4),
            DissipationSpec { kappa_f: mhz(29.1), gamma: mhz(6.35e-3), gamma_phi: mhz(18.04e-3), ..Default::default() },
        );
        let m = build(&s).unwrap();
        assert_eq!(m.collapse.len(), 3);
        assert!(m.h_static.is_hermitian(1e-12));
        let d = dressed_quantities(&s).unwrap();
        assert!(d.index_map.iter().all(|e| e.2 > 0.5));
    }
}
