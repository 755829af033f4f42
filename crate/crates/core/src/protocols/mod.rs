// SPDX-License-Identifier: Apache-2.0
//! Experiments built on the model, tone and integrator layers.

pub mod calibration;
pub mod gate;
pub mod rabi;
pub mod ramsey;
pub mod readout;

pub use calibration::{calibrate_cancellation, CalibrationResult};
pub use gate::{average_gate_fidelity, drag_hamiltonian, gate_error_sweeps, optimize_gate, GateFidelityResult, GateSpec, GateSweep, GateSystem};
pub use rabi::{vacuum_rabi, RabiResult};
pub use ramsey::{ramsey_extract, RamseyConfig, RamseyResult};
pub use readout::{arm_and_release, arming_optimization, readout_histograms, ArmingPlan, DispersiveParams, HistogramResult, ReadoutResult};

use crate::cloaking::{self, AlphaTrajectory, CancellationTone, TimeGrid, DEFAULT_POINTS_PER_PERIOD};
use crate::hilbert::Operator;
use crate::linalg::I;
use crate::model::{self, BuiltModel, DriveSpec, DriveTerm, Port, SystemSpec, Variant, CAVITY, MINUS, PLUS};
use crate::{Error, Result, C64};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Frame in which a cavity-driven simulation is integrated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldFrame {
    /// Drive and tone applied literally.
    Lab,
    /// Conjugated by D(beta_t), where beta solves the driven damped cavity
    /// equation with frequency `omega_ref`. With `omega_ref = None` the bare
    /// cavity frequency is used and beta equals the classical field alpha.
    Displaced { omega_ref: Option<f64> },
}

/// Terms to add to an undriven model for a driven run.
#[derive(Clone, Debug)]
pub struct DrivenTerms {
    pub terms: Vec<DriveTerm>,
    /// Classical lab-frame field of each bosonic mode (readout cavity, or
    /// hybrid modes +/- for the Purcell variant).
    pub field: Arc<AlphaTrajectory>,
    /// Field removed by the frame change (same mode order as `field`).
    pub frame_field: Option<Arc<AlphaTrajectory>>,
    pub mode_labels: Vec<&'static str>,
}

impl DrivenTerms {
    /// Lab field minus frame field for every mode at time t.
    pub fn residual_displacement(&self, t: f64) -> Vec<(&'static str, C64)> {
        self.mode_labels
            .iter()
            .enumerate()
            .map(|(m, l)| {
                let b = self.frame_field.as_ref().map(|f| f.mode(m, t)).unwrap_or_default();
                (*l, self.field.mode(m, t) - b)
            })
            .collect()
    }
}

fn grid_for(drive: &DriveSpec, t_end: f64) -> Result<TimeGrid> {
    let w = drive.carrier.abs().max(1.0);
    TimeGrid::for_carrier(t_end.max(1e-9), w, DEFAULT_POINTS_PER_PERIOD)
}

/// Lab-frame classical field for a cavity or Purcell-port drive on `spec`.
pub fn classical_field(spec: &SystemSpec, drive: &DriveSpec, t_end: f64) -> Result<AlphaTrajectory> {
    let grid = grid_for(drive, t_end)?;
    match (spec.variant, drive.port) {
        (Variant::TransmonPurcell, Port::Purcell) => {
            let hy = model::hybridize(spec.omega_r, spec.omega_f.unwrap_or(spec.omega_r), spec.j_coupling.unwrap_or(0.0))?;
            cloaking::hybrid_equation(drive, &hy, spec.dissipation.kappa_f, spec.dissipation.kappa).solve(&[C64::default(); 2], &grid)
        }
        (Variant::TransmonPurcell, _) | (_, Port::Purcell) => Err(Error::VariantMismatch("Purcell variant needs a Purcell-port drive".into())),
        (_, Port::Cavity) => cloaking::solve_alpha(drive, spec.omega_r, spec.dissipation.kappa, C64::default(), &grid),
        (_, Port::Qubit) => Err(Error::InvalidParameter("cavity field requested for a qubit-port drive".into())),
    }
}

/// Exact cancellation tone for the given field.
pub fn exact_tone_for(spec: &SystemSpec, field: &AlphaTrajectory) -> Result<CancellationTone> {
    Ok(match spec.variant {
        Variant::TransmonPurcell => {
            let hy = model::hybridize(spec.omega_r, spec.omega_f.unwrap_or(spec.omega_r), spec.j_coupling.unwrap_or(0.0))?;
            cloaking::hybrid_tone(field, &hy, spec.g)
        }
        Variant::GeneralMultilevel => cloaking::general_tone(field, spec.g, spec.coupling_phase.unwrap_or(0.0)),
        _ => cloaking::exact_tone(field, spec.g),
    })
}

fn tone_term(m: &BuiltModel, tone: &CancellationTone) -> Result<DriveTerm> {
    if m.variant == Variant::TlsRwa {
        let a = tone.alpha().ok_or_else(|| Error::InvalidParameter("two-level tone needs a field trajectory".into()))?.clone();
        let g = m.g;
        return Ok(DriveTerm::complex("tone", m.qubit_drive_op.clone(), Arc::new(move |t| -g * a.alpha(t))));
    }
    Ok(DriveTerm::real("tone", m.qubit_drive_op.clone(), tone.function()))
}

/// Builds the extra terms for `drive` (cavity or Purcell port) plus an
/// optional qubit tone, to be added to `build(spec)` of the undriven system.
pub fn driven_terms(spec: &SystemSpec, drive: &DriveSpec, tone: Option<&CancellationTone>, frame: FieldFrame, t_end: f64) -> Result<DrivenTerms> {
    let undriven = spec.without_drives();
    let m = model::build(&undriven)?;
    let field = Arc::new(classical_field(spec, drive, t_end)?);
    let purcell = spec.variant == Variant::TransmonPurcell;
    let mode_labels: Vec<&'static str> = if purcell { vec![PLUS, MINUS] } else { vec![CAVITY] };
    let mut terms = Vec::new();
    match frame {
        FieldFrame::Lab => {
            let dm = model::build(&undriven.clone().with_drive(drive.clone()))?;
            terms.extend(dm.drives);
            if let Some(t) = tone {
                terms.push(tone_term(&m, t)?);
            }
            Ok(DrivenTerms { terms, field, frame_field: None, mode_labels })
        }
        FieldFrame::Displaced { omega_ref } => {
            let beta = match omega_ref {
                Some(w) if !purcell && w != spec.omega_r => {
                    let grid = grid_for(drive, t_end)?;
                    Arc::new(cloaking::solve_alpha(drive, w, spec.dissipation.kappa, C64::default(), &grid)?)
                }
                Some(w) if purcell && w != spec.omega_r => {
                    return Err(Error::VariantMismatch("Purcell variant supports only the bare displaced frame".into()));
                }
                _ => field.clone(),
            };
            let g = spec.g;
            let b = beta.clone();
            let tone_fn = tone.map(|t| t.function());
            match spec.variant {
                Variant::TransmonCosine => {
                    terms.push(DriveTerm::real(
                        "qubit_residual",
                        m.qubit_drive_op.clone(),
                        Arc::new(move |t| tone_fn.as_ref().map(|f| f(t)).unwrap_or(0.0) + 2.0 * g * b.alpha(t).im),
                    ));
                }
                Variant::GeneralMultilevel => {
                    let ph = spec.coupling_phase.unwrap_or(0.0);
                    terms.push(DriveTerm::real(
                        "qubit_residual",
                        m.qubit_drive_op.clone(),
                        Arc::new(move |t| tone_fn.as_ref().map(|f| f(t)).unwrap_or(0.0) + 2.0 * g * (b.alpha(t) * C64::from_polar(1.0, ph)).re),
                    ));
                }
                Variant::TransmonPurcell => {
                    let hy = m.hybrid.ok_or_else(|| Error::VariantMismatch("missing hybrid modes".into()))?;
                    terms.push(DriveTerm::real(
                        "qubit_residual",
                        m.qubit_drive_op.clone(),
                        Arc::new(move |t| tone_fn.as_ref().map(|f| f(t)).unwrap_or(0.0) + 2.0 * g * cloaking::hybrid_readout(&b, &hy, t).im),
                    ));
                }
                Variant::TlsRwa => {
                    let tone_alpha = match tone {
                        Some(t) => Some(t.alpha().ok_or_else(|| Error::InvalidParameter("two-level tone needs a field trajectory".into()))?.clone()),
                        None => None,
                    };
                    terms.push(DriveTerm::complex(
                        "qubit_residual",
                        m.qubit_drive_op.clone(),
                        Arc::new(move |t| g * (b.alpha(t) - tone_alpha.as_ref().map(|a| a.alpha(t)).unwrap_or_default())),
                    ));
                }
            }
            if let Some(w) = omega_ref.filter(|&w| w != spec.omega_r) {
                let shift = w - spec.omega_r;
                let b = beta.clone();
                // Residual cavity drive i(G a^dag - G^* a), G = i (w_ref - w_r) beta.
                terms.push(DriveTerm::complex("cavity_residual", m.cavity_a.adjoint(), Arc::new(move |t| I * (I * shift * b.alpha(t)))));
            }
            Ok(DrivenTerms { terms, field, frame_field: Some(beta), mode_labels })
        }
    }
}

/// Embedded displacement operators D(beta_m) for each listed mode.
pub fn displacement_product(layout: &crate::hilbert::SpaceLayout, shifts: &[(&str, C64)]) -> Result<Operator> {
    let mut d = Operator::identity(layout);
    for (label, b) in shifts {
        if b.norm() == 0.0 {
            continue;
        }
        let dim = layout.factor_dim(label)?;
        let op = crate::hilbert::embed(&crate::hilbert::displacement(dim, *b)?, layout, label)?;
        d = &d * &op;
    }
    Ok(d)
}
