// SPDX-License-Identifier: Apache-2.0
//! Nelder-Mead simplex minimization.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NelderMeadConfig {
    /// Initial simplex edge as a fraction of each coordinate (absolute
    /// `min_step` is used for coordinates near zero).
    pub rel_step: f64,
    pub min_step: f64,
    /// Converged when the simplex diameter, relative to the best point, is
    /// below this.
    pub x_tol: f64,
    pub f_tol: f64,
    pub max_iter: usize,
}

impl Default for NelderMeadConfig {
    fn default() -> Self {
        NelderMeadConfig { rel_step: 0.1, min_step: 1e-3, x_tol: 1e-4, f_tol: 0.0, max_iter: 2000 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    /// Best-so-far (x, f) after every iteration.
    pub trace: Vec<(Vec<f64>, f64)>,
}

pub fn nelder_mead<F>(mut f: F, x0: &[f64], cfg: &NelderMeadConfig) -> Result<NelderMeadResult>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let n = x0.len();
    let mut evals = 0;
    let mut eval = |x: &[f64], evals: &mut usize| -> Result<f64> {
        *evals += 1;
        let v = f(x)?;
        Ok(if v.is_finite() { v } else { f64::INFINITY })
    };
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut x = x0.to_vec();
        let step = (cfg.rel_step * x[i].abs()).max(cfg.min_step);
        x[i] += step;
        simplex.push(x);
    }
    let mut fv: Vec<f64> = Vec::with_capacity(n + 1);
    for x in &simplex {
        fv.push(eval(x, &mut evals)?);
    }
    let mut trace = Vec::new();
    for iter in 0..cfg.max_iter {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| fv[a].partial_cmp(&fv[b]).unwrap_or(std::cmp::Ordering::Equal));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        fv = order.iter().map(|&i| fv[i]).collect();
        trace.push((simplex[0].clone(), fv[0]));
        let diam = simplex[1..]
            .iter()
            .flat_map(|x| x.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs() / b.abs().max(cfg.min_step)))
            .fold(0.0, f64::max);
        if diam < cfg.x_tol || (fv[n] - fv[0]).abs() <= cfg.f_tol {
            return Ok(NelderMeadResult { x: simplex[0].clone(), f: fv[0], iterations: iter, evaluations: evals, trace });
        }
        let centroid: Vec<f64> = (0..n).map(|j| simplex[..n].iter().map(|x| x[j]).sum::<f64>() / n as f64).collect();
        let along = |c: f64| -> Vec<f64> { (0..n).map(|j| centroid[j] + c * (simplex[n][j] - centroid[j])).collect() };
        let xr = along(-1.0);
        let fr = eval(&xr, &mut evals)?;
        if fr < fv[0] {
            let xe = along(-2.0);
            let fe = eval(&xe, &mut evals)?;
            if fe < fr {
                simplex[n] = xe;
                fv[n] = fe;
            } else {
                simplex[n] = xr;
                fv[n] = fr;
            }
        } else if fr < fv[n - 1] {
            simplex[n] = xr;
            fv[n] = fr;
        } else {
            let (xc, fc) = if fr < fv[n] {
                let xc = along(-0.5);
                let fc = eval(&xc, &mut evals)?;
                (xc, fc)
            } else {
                let xc = along(0.5);
                let fc = eval(&xc, &mut evals)?;
                (xc, fc)
            };
            if fc < fv[n].min(fr) {
                simplex[n] = xc;
                fv[n] = fc;
            } else {
                for i in 1..=n {
                    let xs: Vec<f64> = (0..n).map(|j| simplex[0][j] + 0.5 * (simplex[i][j] - simplex[0][j])).collect();
                    fv[i] = eval(&xs, &mut evals)?;
                    simplex[i] = xs;
                }
            }
        }
    }
    Err(Error::NonConvergence(cfg.max_iter))
}
