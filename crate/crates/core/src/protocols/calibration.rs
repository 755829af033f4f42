// SPDX-License-Identifier: Apache-2.0
//! Cancellation-tone calibration against Ramsey-extracted shift and dephasing.

use super::ramsey::{ramsey_with_baseline, CoherenceFit, RamseyConfig};
use crate::cloaking::{self, CancellationTone};
use crate::model::{DriveSpec, SystemSpec};
use crate::optimize::{nelder_mead, NelderMeadConfig, NelderMeadResult};
use crate::Result;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub names: Vec<String>,
    pub x: Vec<f64>,
    pub objective: f64,
    /// Best-so-far (x, objective) after every iteration.
    pub trace: Vec<(Vec<f64>, f64)>,
    pub iterations: usize,
    pub evaluations: usize,
}

impl CalibrationResult {
    pub fn from_nm(names: &[&str], r: NelderMeadResult) -> Self {
        CalibrationResult { names: names.iter().map(|s| s.to_string()).collect(), x: r.x, objective: r.f, trace: r.trace, iterations: r.iterations, evaluations: r.evaluations }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|k| self.x[k])
    }
}

/// |delta_Gamma + i delta_omega| for the given tone (None: no tone).
pub fn cancellation_objective(spec: &SystemSpec, drive: &DriveSpec, tone: Option<&CancellationTone>, baseline: &CoherenceFit, cfg: &RamseyConfig) -> Result<f64> {
    let r = ramsey_with_baseline(spec, Some(drive), tone, baseline, cfg)?;
    Ok(r.delta_gamma.hypot(r.delta_omega))
}

/// Optimizes (A, phi) of the single-frequency ansatz A cos(w1 t - phi)(1 - e^{-k t/2})
/// at the drive carrier, starting from `seed`.
pub fn calibrate_cancellation(spec: &SystemSpec, drive: &DriveSpec, seed: (f64, f64), baseline: &CoherenceFit, nm: &NelderMeadConfig, cfg: &RamseyConfig) -> Result<CalibrationResult> {
    let kappa = spec.dissipation.kappa;
    let w1 = drive.carrier;
    let f = |x: &[f64]| -> Result<f64> {
        let tone = cloaking::ansatz_tone(x[0], x[1], w1, kappa);
        cancellation_objective(spec, drive, Some(&tone), baseline, cfg)
    };
    let r = nelder_mead(f, &[seed.0, seed.1], nm)?;
    Ok(CalibrationResult::from_nm(&["A", "phi"], r))
}
