// SPDX-License-Identifier: Apache-2.0
//! Lindblad master-equation integration, steady states, two-time
//! correlators and displaced-frame transforms.
//!
//! Integration runs in the interaction picture of the diagonal of the static
//! Hamiltonian in the bare product basis (`FrameChoice::BareDiagonal`) or in
//! the lab frame. Stored states and expectation values are always returned in
//! the lab frame.

use crate::hilbert::{self, DensityState, Operator, SpaceLayout};
use crate::linalg::{self, ZERO};
use crate::model::{BuiltModel, DriveTerm};
use crate::ode::{self, OdeConfig, OdeStats};
use crate::{Error, Result, C64};
use ndarray::{Array1, Array2};
use ndarray_linalg::SVD;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameChoice {
    Lab,
    BareDiagonal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    pub ode: OdeConfig,
    pub frame: FrameChoice,
    pub store_states: bool,
    /// Upper bound on memory used for stored states.
    pub max_state_bytes: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig { ode: OdeConfig::default(), frame: FrameChoice::BareDiagonal, store_states: false, max_state_bytes: 1 << 30 }
    }
}

impl IntegratorConfig {
    pub fn with_states(mut self) -> Self {
        self.store_states = true;
        self
    }

    pub fn with_ode(mut self, ode: OdeConfig) -> Self {
        self.ode = ode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.ode.validate()
    }
}

/// Sparse matrix whose entries carry a frame phase exp(i w_k t) and
/// optional time-dependent drive contributions.
#[derive(Clone, Debug)]
struct PhasedCsr {
    indptr: Vec<usize>,
    indices: Vec<usize>,
    base: Vec<C64>,
    freq: Vec<usize>,
    /// (entry, coefficient slot, value)
    contrib: Vec<(usize, usize, C64)>,
}

impl PhasedCsr {
    fn nnz(&self) -> usize {
        self.base.len()
    }

    fn fill(&self, phases: &[C64], slots: &[C64], out: &mut Vec<C64>) {
        out.clear();
        out.extend_from_slice(&self.base);
        for &(e, s, v) in &self.contrib {
            out[e] += slots[s] * v;
        }
        for (e, z) in out.iter_mut().enumerate() {
            *z *= phases[self.freq[e]];
        }
    }

    /// out = A x, all n x n row-major.
    fn mul(&self, vals: &[C64], x: &[C64], out: &mut [C64], n: usize) {
        out.iter_mut().for_each(|z| *z = ZERO);
        for i in 0..n {
            let row = &mut out[i * n..(i + 1) * n];
            for e in self.indptr[i]..self.indptr[i + 1] {
                let a = vals[e];
                let k = self.indices[e];
                let xr = &x[k * n..(k + 1) * n];
                for (o, &xv) in row.iter_mut().zip(xr) {
                    *o += a * xv;
                }
            }
        }
    }
}

struct FreqTable {
    map: HashMap<u64, usize>,
    freqs: Vec<f64>,
}

impl FreqTable {
    fn new() -> Self {
        let mut t = FreqTable { map: HashMap::new(), freqs: Vec::new() };
        t.index(0.0);
        t
    }

    fn index(&mut self, w: f64) -> usize {
        let w = if w == 0.0 { 0.0 } else { w };
        let key = w.to_bits();
        if let Some(&k) = self.map.get(&key) {
            return k;
        }
        self.freqs.push(w);
        self.map.insert(key, self.freqs.len() - 1);
        self.freqs.len() - 1
    }
}

/// Right-hand side of the master equation, assembled once and evaluated
/// per step without materializing the superoperator.
pub struct Generator {
    layout: SpaceLayout,
    n: usize,
    frame: FrameChoice,
    energies: Vec<f64>,
    freqs: Vec<f64>,
    /// -i H_eff with H_eff = H - D - (i/2) sum L^dag L (+ drives)
    m: PhasedCsr,
    collapse: Vec<PhasedCsr>,
    drives: Vec<DriveTerm>,
}

struct Workspace {
    phases: Vec<C64>,
    slots: Vec<C64>,
    m_vals: Vec<C64>,
    l_vals: Vec<Vec<C64>>,
    x: Vec<C64>,
    y: Vec<C64>,
    yt: Vec<C64>,
    z: Vec<C64>,
}

fn sparse_pattern(mats: &[&Array2<C64>], n: usize) -> (Vec<usize>, Vec<usize>) {
    let mut indptr = vec![0];
    let mut indices = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if mats.iter().any(|m| m[[i, j]] != ZERO) {
                indices.push(j);
            }
        }
        indptr.push(indices.len());
    }
    (indptr, indices)
}

impl Generator {
    pub fn new(h_static: &Operator, drives: &[DriveTerm], collapse: &[Operator], frame: FrameChoice) -> Result<Self> {
        let n = h_static.dim();
        for op in drives.iter().map(|d| &d.op).chain(collapse.iter()) {
            if op.dim() != n {
                return Err(Error::DimensionMismatch { expected: n, found: op.dim() });
            }
        }
        let h = h_static.matrix();
        let energies: Vec<f64> = match frame {
            FrameChoice::Lab => vec![0.0; n],
            FrameChoice::BareDiagonal => (0..n).map(|i| h[[i, i]].re).collect(),
        };
        let mut ft = FreqTable::new();
        let mut freq_of = |i: usize, j: usize| ft.index(energies[i] - energies[j]);

        let mut heff = h.clone();
        for i in 0..n {
            heff[[i, i]] -= C64::new(energies[i], 0.0);
        }
        for l in collapse {
            let ldl = linalg::dagger(l.matrix()).dot(l.matrix());
            heff = heff - ldl.mapv(|z| z * C64::new(0.0, 0.5));
        }
        let m_static = heff.mapv(|z| z * C64::new(0.0, -1.0));

        // Coefficient slots: 2k -> c_k(t), 2k+1 -> conj(c_k(t)).
        let mut drive_mats = Vec::new();
        for d in drives {
            let op = d.op.matrix().mapv(|z| z * C64::new(0.0, -1.0));
            let adj = if d.paired { Some(linalg::dagger(d.op.matrix()).mapv(|z| z * C64::new(0.0, -1.0))) } else { None };
            drive_mats.push((op, adj));
        }
        let mut refs: Vec<&Array2<C64>> = vec![&m_static];
        for (op, adj) in &drive_mats {
            refs.push(op);
            if let Some(a) = adj {
                refs.push(a);
            }
        }
        let (indptr, indices) = sparse_pattern(&refs, n);
        let mut base = Vec::with_capacity(indices.len());
        let mut freq = Vec::with_capacity(indices.len());
        let mut contrib = Vec::new();
        for i in 0..n {
            for e in indptr[i]..indptr[i + 1] {
                let j = indices[e];
                base.push(m_static[[i, j]]);
                freq.push(freq_of(i, j));
                for (k, (op, adj)) in drive_mats.iter().enumerate() {
                    if op[[i, j]] != ZERO {
                        contrib.push((e, 2 * k, op[[i, j]]));
                    }
                    if let Some(a) = adj {
                        if a[[i, j]] != ZERO {
                            contrib.push((e, 2 * k + 1, a[[i, j]]));
                        }
                    }
                }
            }
        }
        let m = PhasedCsr { indptr, indices, base, freq, contrib };

        let mut cl = Vec::new();
        for l in collapse {
            let lm = l.matrix();
            let (indptr, indices) = sparse_pattern(&[lm], n);
            let mut base = Vec::new();
            let mut freq = Vec::new();
            for i in 0..n {
                for e in indptr[i]..indptr[i + 1] {
                    let j = indices[e];
                    base.push(lm[[i, j]]);
                    freq.push(freq_of(i, j));
                }
            }
            if !base.is_empty() {
                cl.push(PhasedCsr { indptr, indices, base, freq, contrib: Vec::new() });
            }
        }
        Ok(Generator {
            layout: h_static.layout().clone(),
            n,
            frame,
            energies,
            freqs: ft.freqs,
            m,
            collapse: cl,
            drives: drives.to_vec(),
        })
    }

    pub fn from_model(model: &BuiltModel, extra: &[DriveTerm], frame: FrameChoice) -> Result<Self> {
        let mut drives = model.drives.clone();
        drives.extend_from_slice(extra);
        Self::new(&model.h_static, &drives, &model.collapse, frame)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn layout(&self) -> &SpaceLayout {
        &self.layout
    }

    pub fn frame(&self) -> FrameChoice {
        self.frame
    }

    /// Largest frame-rotation frequency retained in the RHS.
    pub fn max_frequency(&self) -> f64 {
        self.freqs.iter().fold(0.0, |m: f64, w| m.max(w.abs()))
    }

    pub fn nnz(&self) -> usize {
        self.m.nnz() + self.collapse.iter().map(|c| c.nnz()).sum::<usize>()
    }

    fn workspace(&self) -> Workspace {
        let nn = self.n * self.n;
        Workspace {
            phases: vec![ZERO; self.freqs.len()],
            slots: vec![ZERO; 2 * self.drives.len()],
            m_vals: Vec::with_capacity(self.m.nnz()),
            l_vals: self.collapse.iter().map(|c| Vec::with_capacity(c.nnz())).collect(),
            x: vec![ZERO; nn],
            y: vec![ZERO; nn],
            yt: vec![ZERO; nn],
            z: vec![ZERO; nn],
        }
    }

    fn assemble(&self, t: f64, ws: &mut Workspace) {
        for (p, &w) in ws.phases.iter_mut().zip(&self.freqs) {
            *p = if w == 0.0 { C64::new(1.0, 0.0) } else { C64::from_polar(1.0, w * t) };
        }
        for (k, d) in self.drives.iter().enumerate() {
            let c = (d.coeff)(t);
            ws.slots[2 * k] = c;
            ws.slots[2 * k + 1] = c.conj();
        }
        self.m.fill(&ws.phases, &ws.slots, &mut ws.m_vals);
        for (c, v) in self.collapse.iter().zip(ws.l_vals.iter_mut()) {
            c.fill(&ws.phases, &ws.slots, v);
        }
    }

    fn conj_transpose(src: &[C64], dst: &mut [C64], n: usize) {
        for i in 0..n {
            for j in 0..n {
                dst[j * n + i] = src[i * n + j].conj();
            }
        }
    }

    /// d(rho)/dt in the integration frame. `hermitian` allows the cheaper
    /// path valid for density matrices.
    fn rhs(&self, t: f64, rho: &[C64], drho: &mut [C64], ws: &mut Workspace, hermitian: bool) {
        let n = self.n;
        self.assemble(t, ws);
        self.m.mul(&ws.m_vals, rho, &mut ws.x, n);
        if hermitian {
            for i in 0..n {
                for j in 0..n {
                    drho[i * n + j] = ws.x[i * n + j] + ws.x[j * n + i].conj();
                }
            }
        } else {
            // rho M^dag = (M rho^dag)^dag
            Self::conj_transpose(rho, &mut ws.yt, n);
            self.m.mul(&ws.m_vals, &ws.yt, &mut ws.y, n);
            for i in 0..n {
                for j in 0..n {
                    drho[i * n + j] = ws.x[i * n + j] + ws.y[j * n + i].conj();
                }
            }
        }
        for (c, vals) in self.collapse.iter().zip(&ws.l_vals) {
            // L rho L^dag = (L (L rho)^dag)^dag
            c.mul(vals, rho, &mut ws.y, n);
            Self::conj_transpose(&ws.y, &mut ws.yt, n);
            c.mul(vals, &ws.yt, &mut ws.z, n);
            if hermitian {
                for (d, z) in drho.iter_mut().zip(&ws.z) {
                    *d += z;
                }
            } else {
                for i in 0..n {
                    for j in 0..n {
                        drho[i * n + j] += ws.z[j * n + i].conj();
                    }
                }
            }
        }
    }

    fn to_frame(&self, rho: &Array2<C64>, t: f64, out: &mut [C64]) {
        let n = self.n;
        for i in 0..n {
            for j in 0..n {
                let w = self.energies[i] - self.energies[j];
                let ph = if w == 0.0 { C64::new(1.0, 0.0) } else { C64::from_polar(1.0, w * t) };
                out[i * n + j] = rho[[i, j]] * ph;
            }
        }
    }

    fn to_lab(&self, y: &[C64], t: f64) -> Array2<C64> {
        let n = self.n;
        Array2::from_shape_fn((n, n), |(i, j)| {
            let w = self.energies[i] - self.energies[j];
            let z = y[i * n + j];
            if w == 0.0 {
                z
            } else {
                z * C64::from_polar(1.0, -w * t)
            }
        })
    }

    /// Integrates from `t0` through the output times, handing the lab-frame
    /// matrix to `observe`. Non-Hermitian initial operators are supported
    /// (used for quantum regression).
    pub fn propagate<O>(&self, x0: &Array2<C64>, t0: f64, times: &[f64], cfg: &OdeConfig, mut observe: O) -> Result<OdeStats>
    where
        O: FnMut(usize, f64, &Array2<C64>) -> Result<()>,
    {
        let n = self.n;
        if x0.dim() != (n, n) {
            return Err(Error::DimensionMismatch { expected: n, found: x0.nrows() });
        }
        let hermitian = linalg::max_abs((x0 - &linalg::dagger(x0)).view()) == 0.0;
        let mut y0 = vec![ZERO; n * n];
        self.to_frame(x0, t0, &mut y0);
        let mut ws = self.workspace();
        let mut f = |t: f64, y: &[C64], dy: &mut [C64]| self.rhs(t, y, dy, &mut ws, hermitian);
        ode::integrate(&mut f, &y0, t0, times, cfg, |k, t, y| {
            let lab = self.to_lab(y, t);
            observe(k, t, &lab)
        })
    }

    /// Evaluates the RHS at time t on a lab-frame operator (for tests and
    /// diagnostics).
    pub fn derivative(&self, t: f64, x: &Array2<C64>) -> Array2<C64> {
        let n = self.n;
        let mut y = vec![ZERO; n * n];
        self.to_frame(x, t, &mut y);
        let mut dy = vec![ZERO; n * n];
        let mut ws = self.workspace();
        self.rhs(t, &y, &mut dy, &mut ws, false);
        // d/dt of frame-rotated entries picks up -i w rho.
        Array2::from_shape_fn((n, n), |(i, j)| {
            let w = self.energies[i] - self.energies[j];
            let back = C64::from_polar(1.0, -w * t);
            (dy[i * n + j] - C64::new(0.0, w) * y[i * n + j]) * back
        })
    }
}

/// Stored output of an integration, all in the lab frame.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub layout: SpaceLayout,
    pub times: Vec<f64>,
    pub states: Option<Vec<DensityState>>,
    pub expectations: Vec<(String, Vec<C64>)>,
    /// Frame used during integration.
    pub frame: FrameChoice,
    pub stats: OdeStats,
    pub max_trace_error: f64,
    pub max_hermiticity_defect: f64,
}

impl Trajectory {
    pub fn expectation(&self, name: &str) -> Option<&[C64]> {
        self.expectations.iter().find(|(k, _)| k == name).map(|(_, v)| v.as_slice())
    }

    pub fn real_series(&self, name: &str) -> Result<Vec<f64>> {
        self.expectation(name).map(|v| v.iter().map(|z| z.re).collect()).ok_or_else(|| Error::LabelNotFound(name.into()))
    }
}

fn hermiticity_defect(m: &Array2<C64>) -> f64 {
    let n = m.nrows();
    let mut d: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            d = d.max((m[[i, j]] - m[[j, i]].conj()).norm());
        }
    }
    d
}

/// Integrates a density matrix and records expectation values of the given
/// observables at each output time. `times[0]` is the start time.
pub fn evolve_generator(gen: &Generator, rho0: &DensityState, times: &[f64], cfg: &IntegratorConfig, observables: &[(String, Operator)]) -> Result<Trajectory> {
    cfg.validate()?;
    if rho0.dim() != gen.dim() {
        return Err(Error::DimensionMismatch { expected: gen.dim(), found: rho0.dim() });
    }
    if times.is_empty() {
        return Err(Error::InvalidParameter("empty time grid".into()));
    }
    for (name, op) in observables {
        if op.dim() != gen.dim() {
            return Err(Error::InvalidParameter(format!("observable {name} has dimension {}", op.dim())));
        }
    }
    let bytes = times.len() * gen.dim() * gen.dim() * 16;
    let store = cfg.store_states && {
        if bytes > cfg.max_state_bytes {
            log::warn!("not storing {} states ({bytes} bytes exceeds limit)", times.len());
        }
        bytes <= cfg.max_state_bytes
    };
    let mut states = store.then(|| Vec::with_capacity(times.len()));
    let mut exps: Vec<Vec<C64>> = vec![Vec::with_capacity(times.len()); observables.len()];
    let mut max_tr: f64 = 0.0;
    let mut max_h: f64 = 0.0;
    let layout = gen.layout().clone();
    let stats = gen.propagate(rho0.matrix(), times[0], times, &cfg.ode, |_, _, m| {
        max_tr = max_tr.max((linalg::trace(m) - C64::new(1.0, 0.0)).norm());
        max_h = max_h.max(hermiticity_defect(m));
        for (k, (_, op)) in observables.iter().enumerate() {
            exps[k].push(hilbert::expect_matrix(op.matrix(), m));
        }
        if let Some(s) = states.as_mut() {
            s.push(DensityState::from_raw(layout.clone(), linalg::hermitize(m))?);
        }
        Ok(())
    })?;
    Ok(Trajectory {
        layout,
        times: times.to_vec(),
        states,
        expectations: observables.iter().map(|(k, _)| k.clone()).zip(exps).collect(),
        frame: gen.frame(),
        stats,
        max_trace_error: max_tr,
        max_hermiticity_defect: max_h,
    })
}

pub fn evolve(
    rho0: &DensityState,
    h_static: &Operator,
    drives: &[DriveTerm],
    collapse: &[Operator],
    times: &[f64],
    cfg: &IntegratorConfig,
    observables: &[(String, Operator)],
) -> Result<Trajectory> {
    let gen = Generator::new(h_static, drives, collapse, cfg.frame)?;
    evolve_generator(&gen, rho0, times, cfg, observables)
}

pub fn evolve_model(model: &BuiltModel, extra: &[DriveTerm], rho0: &DensityState, times: &[f64], cfg: &IntegratorConfig, observables: &[(String, Operator)]) -> Result<Trajectory> {
    let gen = Generator::from_model(model, extra, cfg.frame)?;
    evolve_generator(&gen, rho0, times, cfg, observables)
}

/// Superoperator acting on row-major vec(rho).
#[derive(Clone, Debug)]
pub struct Liouvillian {
    pub dim: usize,
    pub mat: Array2<C64>,
}

pub fn liouvillian(h: &Operator, collapse: &[Operator]) -> Result<Liouvillian> {
    let n = h.dim();
    let id = Array2::<C64>::eye(n);
    let hm = h.matrix();
    let mi = C64::new(0.0, -1.0);
    let mut l = (linalg::kron(hm, &id) - linalg::kron(&id, &hm.t().to_owned())).mapv(|z| z * mi);
    for c in collapse {
        if c.dim() != n {
            return Err(Error::DimensionMismatch { expected: n, found: c.dim() });
        }
        let cm = c.matrix();
        let ldl = linalg::dagger(cm).dot(cm);
        l = l + linalg::kron(cm, &cm.mapv(|z| z.conj())) - linalg::kron(&ldl, &id).mapv(|z| z * 0.5) - linalg::kron(&id, &ldl.t().to_owned()).mapv(|z| z * 0.5);
    }
    Ok(Liouvillian { dim: n, mat: l })
}

impl Liouvillian {
    pub fn apply(&self, rho: &Array2<C64>) -> Array2<C64> {
        let n = self.dim;
        let v = Array1::from_iter(rho.iter().copied());
        let out = self.mat.dot(&v);
        Array2::from_shape_vec((n, n), out.to_vec()).unwrap()
    }

    /// Number of singular values below `tol` times the largest.
    pub fn null_dimension(&self, tol: f64) -> Result<usize> {
        let (_, s, _) = self.mat.svd(false, false)?;
        let smax = s.iter().cloned().fold(0.0, f64::max);
        Ok(s.iter().filter(|&&x| x <= tol * smax).count())
    }
}

/// Stationary state of a time-independent generator.
pub fn steady_state(h: &Operator, collapse: &[Operator]) -> Result<DensityState> {
    let n = h.dim();
    let l = liouvillian(h, collapse)?;
    if n * n <= 4096 {
        let nd = l.null_dimension(1e-11)?;
        if nd > 1 {
            return Err(Error::NonUniqueSteadyState(nd));
        }
    }
    let mut a = l.mat.clone();
    let mut b = Array1::zeros(n * n);
    // Replace the first row with the trace functional.
    for k in 0..n * n {
        a[[0, k]] = ZERO;
    }
    for i in 0..n {
        a[[0, i * n + i]] = C64::new(1.0, 0.0);
    }
    b[0] = C64::new(1.0, 0.0);
    let x = linalg::solve(&a, &b)?;
    let rho = Array2::from_shape_vec((n, n), x.to_vec()).unwrap();
    let rho = linalg::hermitize(&rho);
    let resid = linalg::max_abs(l.apply(&rho).view());
    let scale = linalg::max_abs(l.mat.view()).max(1e-300);
    if !resid.is_finite() || resid > 1e-8 * scale {
        return Err(Error::NonUniqueSteadyState(0));
    }
    DensityState::from_raw(h.layout().clone(), rho)
}

/// <A(t) B(0)>_s by evolving B rho_s under the same generator and tracing
/// against A. The generator must be time independent.
pub fn two_time_correlation(steady: &DensityState, a: &Operator, b: &Operator, times: &[f64], gen: &Generator, cfg: &OdeConfig) -> Result<Vec<C64>> {
    let n = gen.dim();
    if a.dim() != n || b.dim() != n || steady.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, found: a.dim().max(b.dim()) });
    }
    let drift = linalg::max_abs(gen.derivative(0.0, steady.matrix()).view());
    if drift > 1e-8 {
        return Err(Error::InvalidState(format!("state is not stationary (|L rho| = {drift:.2e})")));
    }
    let x0 = b.matrix().dot(steady.matrix());
    let mut out = Vec::with_capacity(times.len());
    let t0 = times.first().copied().unwrap_or(0.0);
    gen.propagate(&x0, t0, times, cfg, |_, _, x| {
        out.push(hilbert::expect_matrix(a.matrix(), x));
        Ok(())
    })?;
    Ok(out)
}

/// D^dag(alpha) rho D(alpha) on the bosonic factor `label`.
pub fn displaced_transform(state: &DensityState, alpha: C64, label: &str) -> Result<DensityState> {
    let layout = state.layout().clone();
    let dim = layout.factor_dim(label)?;
    if dim < 2 {
        return Err(Error::InvalidDimension { dim, reason: "displacement needs a bosonic factor".into() });
    }
    if alpha == ZERO {
        return Ok(state.clone());
    }
    let nop = hilbert::embed(&hilbert::number(dim)?, &layout, label)?;
    let nbar = nop.expect(state).re.max(0.0);
    let reach = nbar.sqrt() + alpha.norm();
    let support = reach * reach + 3.0 * reach + 1.0;
    if support > 0.9 * dim as f64 {
        log::warn!("displaced state support ~{support:.1} exceeds 90% of the {dim}-level cutoff on {label}");
    }
    let d = hilbert::embed(&hilbert::displacement(dim, alpha)?, &layout, label)?;
    state.conjugate(&d.adjoint())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{annihilation, qubit};
    use crate::model::{self, DissipationSpec, SystemSpec};
    use std::sync::Arc;

    fn cfg() -> IntegratorConfig {
        IntegratorConfig::default()
    }

    #[test]
    fn fock_decay() {
        let d = 8;
        let a = annihilation(d).unwrap();
        let k: f64 = 0.7;
        let h = Operator::zeros(&SpaceLayout::single(d));
        let rho0 = DensityState::basis(&SpaceLayout::single(d), &[3]).unwrap();
        let times: Vec<f64> = (0..=40).map(|i| i as f64 * 0.1).collect();
        let nop = hilbert::number(d).unwrap();
        let tr = evolve(&rho0, &h, &[], &[a.scale_re(k.sqrt())], &times, &cfg(), &[("n".into(), nop)]).unwrap();
        for (t, z) in times.iter().zip(tr.expectation("n").unwrap()) {
            assert!((z.re - 3.0 * (-k * t).exp()).abs() < 1e-8);
        }
        assert!(tr.max_trace_error < 1e-8);
    }

    #[test]
    fn closed_vacuum_rabi() {
        let gp = 0.3;
        let spec = SystemSpec::tls_rwa(5.0, 5.0, gp, 4, DissipationSpec::default());
        let m = model::build(&spec).unwrap();
        let rho0 = DensityState::basis(&m.layout, &[1, 0]).unwrap();
        let pe = m.qubit_projector(1).unwrap();
        let times: Vec<f64> = (0..=100).map(|i| i as f64 * 0.2).collect();
        for frame in [FrameChoice::Lab, FrameChoice::BareDiagonal] {
            let c = IntegratorConfig { frame, ..cfg() };
            let tr = evolve_model(&m, &[], &rho0, &times, &c, &[("pe".into(), pe.clone())]).unwrap();
            for (t, z) in times.iter().zip(tr.expectation("pe").unwrap()) {
                assert!((z.re - (gp * t).cos().powi(2)).abs() < 1e-8, "{frame:?} t={t}");
            }
        }
    }

    #[test]
    fn adaptive_and_fixed_agree_on_driven_tls() {
        let spec = SystemSpec::tls_rwa(4.0, 4.3, 0.1, 5, DissipationSpec { kappa: 0.2, gamma: 0.05, gamma_phi: 0.02, ..Default::default() });
        let m = model::build(&spec).unwrap();
        let drive = DriveTerm::complex("cav", m.cavity_a.adjoint(), Arc::new(|t: f64| C64::from_polar(0.15, -4.2 * t)));
        let qd = DriveTerm::real("q", qubit::sigma_x().kron(&Operator::identity(&SpaceLayout::single(5))).with_layout(&m.layout).unwrap(), Arc::new(|t: f64| 0.05 * (4.1 * t).cos()));
        let rho0 = DensityState::basis(&m.layout, &[0, 0]).unwrap();
        let times: Vec<f64> = (0..=20).map(|i| i as f64 * 0.5).collect();
        let obs = vec![("a".to_string(), m.cavity_a.clone()), ("pe".to_string(), m.qubit_projector(1).unwrap())];
        let extra = vec![drive, qd];
        let a = evolve_model(&m, &extra, &rho0, &times, &cfg().with_states(), &obs).unwrap();
        let f = evolve_model(&m, &extra, &rho0, &times, &IntegratorConfig { ode: OdeConfig::rk4(0.002), ..cfg().with_states() }, &obs).unwrap();
        let (sa, sf) = (a.states.unwrap(), f.states.unwrap());
        for (x, y) in sa.iter().zip(&sf) {
            assert!(x.trace_distance(y).unwrap() < 1e-7);
        }
    }

    #[test]
    fn derivative_matches_dense_formula() {
        let spec = SystemSpec::tls_rwa(4.0, 4.3, 0.1, 4, DissipationSpec { kappa: 0.2, gamma: 0.05, gamma_phi: 0.02, n_th: 0.1, ..Default::default() });
        let m = model::build(&spec).unwrap();
        let drive = DriveTerm::complex("cav", m.cavity_a.adjoint(), Arc::new(|t: f64| C64::from_polar(0.15, -4.2 * t)));
        let n = m.dim();
        let x = Array2::from_shape_fn((n, n), |(i, j)| C64::new(((i * 3 + j) as f64).sin(), ((i + 5 * j) as f64).cos()));
        let gen = Generator::from_model(&m, std::slice::from_ref(&drive), FrameChoice::BareDiagonal).unwrap();
        let t = 1.37;
        let got = gen.derivative(t, &x);
        let h = &m.hamiltonian_at(t) + &drive.at(t);
        let mut want = (h.dot(&x) - x.dot(&h)).mapv(|z| z * C64::new(0.0, -1.0));
        for l in &m.collapse {
            let lm = l.matrix();
            let ld = linalg::dagger(lm);
            let ldl = ld.dot(lm);
            want = want + lm.dot(&x).dot(&ld) - (ldl.dot(&x) + x.dot(&ldl)).mapv(|z| z * 0.5);
        }
        assert!(linalg::max_abs((&got - &want).view()) < 1e-10);
        let lv = liouvillian(&Operator::from_matrix(m.hamiltonian_at(0.0)).unwrap().with_layout(&m.layout).unwrap(), &m.collapse).unwrap();
        let gen0 = Generator::from_model(&m, &[], FrameChoice::Lab).unwrap();
        assert!(linalg::max_abs((&lv.apply(&x) - &gen0.derivative(0.0, &x)).view()) < 1e-10);
    }

    #[test]
    fn steady_coherent_cavity() {
        let d = 20;
        let a = annihilation(d).unwrap();
        let (delta, k, eps): (f64, f64, f64) = (0.3, 0.5, 0.4);
        // Rotating frame with drive i(F a^dag - F^* a), F = i eps/2.
        let f = C64::new(0.0, 0.5 * eps);
        let drive = (&a.adjoint().scale(f) - &a.scale(f.conj())).scale(C64::new(0.0, 1.0));
        let h = &hilbert::number(d).unwrap().scale_re(delta) + &drive;
        let rho = steady_state(&h, &[a.scale_re(k.sqrt())]).unwrap();
        let alpha = C64::new(0.5 * eps, 0.0) / C64::new(delta, -0.5 * k);
        let got = a.expect(&rho);
        assert!((got - alpha).norm() < 1e-8, "{got} vs {alpha}");
        assert!((rho.purity() - 1.0).abs() < 1e-8);
        let vac = steady_state(&hilbert::number(d).unwrap(), &[a.scale_re(k.sqrt())]).unwrap();
        assert!((vac.matrix()[[0, 0]].re - 1.0).abs() < 1e-10);
    }

    #[test]
    fn steady_thermal_and_degenerate() {
        let d = 25;
        let a = annihilation(d).unwrap();
        let (k, nth): (f64, f64) = (0.5, 0.2);
        let c = vec![a.scale_re((k * (1.0 + nth)).sqrt()), a.adjoint().scale_re((k * nth).sqrt())];
        let rho = steady_state(&hilbert::number(d).unwrap(), &c).unwrap();
        assert!((hilbert::number(d).unwrap().expect(&rho).re - nth).abs() < 1e-8);
        let z = Operator::zeros(&SpaceLayout::single(3));
        assert!(matches!(steady_state(&z, &[]), Err(Error::NonUniqueSteadyState(_))));
    }

    #[test]
    fn qubit_correlation() {
        let (wq, g, gphi): (f64, f64, f64) = (2.0, 0.2, 0.05);
        let h = qubit::sigma_z().scale_re(0.5 * wq);
        let c = vec![qubit::sigma_minus().scale_re(g.sqrt()), (&qubit::sigma_plus() * &qubit::sigma_minus()).scale_re((2.0 * gphi).sqrt())];
        let gen = Generator::new(&h, &[], &c, FrameChoice::BareDiagonal).unwrap();
        let rho = steady_state(&h, &c).unwrap();
        let times: Vec<f64> = (0..=50).map(|i| i as f64 * 0.2).collect();
        let corr = two_time_correlation(&rho, &qubit::sigma_minus(), &qubit::sigma_plus(), &times, &gen, &OdeConfig::default()).unwrap();
        let g2 = 0.5 * g + gphi;
        for (t, z) in times.iter().zip(&corr) {
            let want = C64::from_polar((-g2 * t).exp(), -wq * t);
            assert!((z - want).norm() < 1e-8);
        }
        assert!((corr[0] - C64::new(1.0, 0.0)).norm() < 1e-12);
        let id = Operator::identity(&SpaceLayout::single(2));
        let ones = two_time_correlation(&rho, &id, &id, &times, &gen, &OdeConfig::default()).unwrap();
        assert!(ones.iter().all(|z| (z - C64::new(1.0, 0.0)).norm() < 1e-10));
    }

    #[test]
    fn displaced_transform_basics() {
        let layout = SpaceLayout::new(vec![("qubit", 2), ("cavity", 30)]).unwrap();
        let rho = DensityState::basis(&layout, &[1, 0]).unwrap();
        assert_eq!(displaced_transform(&rho, ZERO, "cavity").unwrap().matrix(), rho.matrix());
        let al = C64::new(0.8, -0.6);
        let r = displaced_transform(&rho, al, "cavity").unwrap();
        let n = hilbert::embed(&hilbert::number(30).unwrap(), &layout, "cavity").unwrap();
        assert!((n.expect(&r).re - al.norm_sqr()).abs() < 1e-10);
        let back = r.conjugate(&hilbert::embed(&hilbert::displacement(30, al).unwrap(), &layout, "cavity").unwrap()).unwrap();
        assert!(back.trace_distance(&rho).unwrap() < 1e-9);
        assert!(displaced_transform(&rho, al, "qubit").is_ok());
        assert!(displaced_transform(&rho, al, "nope").is_err());
    }
}
