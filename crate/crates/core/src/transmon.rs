// SPDX-License-Identifier: Apache-2.0
//! Charge-basis diagonalization of 4E_C n^2 - E_J cos(phi) at zero offset charge.

use crate::linalg::{self, dagger};
use crate::{Error, Result, C64};
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

pub const DEFAULT_CHARGE_CUTOFF: usize = 30;
const CONVERGENCE_TOL: f64 = 1e-9;

/// Energies divided by h, in GHz.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransmonParams {
    pub e_c: f64,
    pub e_j: f64,
}

impl TransmonParams {
    pub fn new(e_c: f64, e_j: f64) -> Result<Self> {
        let p = TransmonParams { e_c, e_j };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.e_c > 0.0 && self.e_c.is_finite()) || !(self.e_j >= 0.0 && self.e_j.is_finite()) {
            return Err(Error::InvalidParameter(format!("transmon E_C={} E_J={}", self.e_c, self.e_j)));
        }
        if self.e_j / self.e_c < 1.0 {
            log::warn!("E_J/E_C = {:.3} is outside the transmon regime", self.e_j / self.e_c);
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TransmonModes {
    pub n_levels: usize,
    /// E_j/h in GHz with E_0 = 0.
    pub energies: Vec<f64>,
    /// <j|n|k> in the eigenbasis, gauge: <j|n|j+1> positive imaginary.
    pub n_matrix: Array2<C64>,
    /// sum_j sqrt(j+1) |j><j+1|
    pub lowering: Array2<C64>,
}

impl TransmonModes {
    pub fn omega_01(&self) -> f64 {
        self.energies[1] - self.energies[0]
    }

    pub fn anharmonicity(&self) -> f64 {
        (self.energies[2] - self.energies[1]) - (self.energies[1] - self.energies[0])
    }
}

fn raw_eigen(p: &TransmonParams, cutoff: usize) -> Result<(Array1<f64>, Array2<C64>, Array2<C64>)> {
    let dim = 2 * cutoff + 1;
    let mut h = Array2::<C64>::zeros((dim, dim));
    let mut n = Array2::<C64>::zeros((dim, dim));
    for i in 0..dim {
        let m = i as f64 - cutoff as f64;
        h[[i, i]] = C64::new(4.0 * p.e_c * m * m, 0.0);
        n[[i, i]] = C64::new(m, 0.0);
        if i + 1 < dim {
            h[[i, i + 1]] = C64::new(-0.5 * p.e_j, 0.0);
            h[[i + 1, i]] = C64::new(-0.5 * p.e_j, 0.0);
        }
    }
    let (w, v) = linalg::eigh(&h)?;
    Ok((w, v, n))
}

/// Lowest `n_levels` eigenpairs with a doubling-cutoff convergence check.
pub fn diagonalize(params: &TransmonParams, charge_cutoff: usize, n_levels: usize) -> Result<TransmonModes> {
    params.validate()?;
    if charge_cutoff < 10 {
        return Err(Error::InvalidParameter(format!("charge cutoff {charge_cutoff} < 10")));
    }
    if n_levels < 2 || n_levels > 2 * charge_cutoff - 3 {
        return Err(Error::InvalidParameter(format!("n_levels {n_levels} outside [2, {}]", 2 * charge_cutoff - 3)));
    }
    let (w, v, nop) = raw_eigen(params, charge_cutoff)?;
    let (w2, _, _) = raw_eigen(params, 2 * charge_cutoff)?;
    for j in 1..n_levels {
        let e1 = w[j] - w[0];
        let e2 = w2[j] - w2[0];
        let rel = (e1 - e2).abs() / e2.abs().max(f64::MIN_POSITIVE);
        if rel > CONVERGENCE_TOL {
            return Err(Error::InsufficientCutoff { level: j, rel_change: rel });
        }
    }
    let dim = w.len();
    let mut vecs = Array2::<C64>::zeros((dim, n_levels));
    for j in 0..n_levels {
        vecs.column_mut(j).assign(&v.column(j));
    }
    // Level 0: largest component real positive.
    let (imax, _) = vecs.column(0).iter().enumerate().fold((0, 0.0), |acc, (i, z)| if z.norm() > acc.1 { (i, z.norm()) } else { acc });
    let ph = vecs[[imax, 0]].conj() / vecs[[imax, 0]].norm();
    vecs.column_mut(0).mapv_inplace(|z| z * ph);
    for j in 1..n_levels {
        let prev = vecs.column(j - 1).to_owned();
        let cur = vecs.column(j).to_owned();
        let el: C64 = (0..dim).map(|i| prev[i].conj() * nop[[i, i]] * cur[i]).sum();
        let ph = if el.norm() > 1e-12 {
            C64::new(0.0, 1.0) * el.conj() / el.norm()
        } else {
            let (imax, _) = cur.iter().enumerate().fold((0, 0.0), |acc, (i, z)| if z.norm() > acc.1 { (i, z.norm()) } else { acc });
            cur[imax].conj() / cur[imax].norm()
        };
        vecs.column_mut(j).mapv_inplace(|z| z * ph);
    }
    let n_matrix = dagger(&vecs).dot(&nop).dot(&vecs);
    let mut lowering = Array2::zeros((n_levels, n_levels));
    for j in 0..n_levels - 1 {
        lowering[[j, j + 1]] = C64::new(((j + 1) as f64).sqrt(), 0.0);
    }
    Ok(TransmonModes {
        n_levels,
        energies: (0..n_levels).map(|j| w[j] - w[0]).collect(),
        n_matrix,
        lowering,
    })
}

/// Closed-form two-level reduction; same frequency units as the inputs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoLevelReduction {
    pub omega_q: f64,
    pub g_prime: f64,
}

pub fn two_level(params: &TransmonParams, g: f64) -> Result<TwoLevelReduction> {
    params.validate()?;
    Ok(TwoLevelReduction {
        omega_q: (8.0 * params.e_c * params.e_j).sqrt() - params.e_c,
        g_prime: 0.5 * g * (params.e_j / (2.0 * params.e_c)).powf(0.25),
    })
}
