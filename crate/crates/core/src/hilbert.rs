// SPDX-License-Identifier: Apache-2.0
//! Dense operators and density matrices on tensor-factored spaces.

use crate::linalg::{self, dagger, kron, max_abs, ONE, ZERO};
use crate::{Error, Result, C64};
use ndarray::{Array1, Array2};
use std::ops::{Add, Mul, Sub};

/// Ordered list of labelled tensor factors.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpaceLayout {
    factors: Vec<(String, usize)>,
}

impl SpaceLayout {
    pub fn new<S: Into<String>>(factors: Vec<(S, usize)>) -> Result<Self> {
        let factors: Vec<(String, usize)> = factors.into_iter().map(|(l, d)| (l.into(), d)).collect();
        if factors.is_empty() {
            return Err(Error::InvalidDimension { dim: 0, reason: "layout has no factors".into() });
        }
        for (i, (l, d)) in factors.iter().enumerate() {
            if *d < 1 {
                return Err(Error::InvalidDimension { dim: *d, reason: format!("factor {l}") });
            }
            if factors[..i].iter().any(|(m, _)| m == l) {
                return Err(Error::InvalidParameter(format!("duplicate factor label {l}")));
            }
        }
        Ok(SpaceLayout { factors })
    }

    /// Single unlabelled factor, used for operators built before embedding.
    pub fn single(dim: usize) -> Self {
        SpaceLayout { factors: vec![(String::new(), dim)] }
    }

    pub fn total_dim(&self) -> usize {
        self.factors.iter().map(|f| f.1).product()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.factors.iter().map(|f| f.1).collect()
    }

    pub fn labels(&self) -> Vec<&str> {
        self.factors.iter().map(|f| f.0.as_str()).collect()
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.factors
            .iter()
            .position(|f| f.0 == label)
            .ok_or_else(|| Error::LabelNotFound(label.to_string()))
    }

    pub fn factor_dim(&self, label: &str) -> Result<usize> {
        Ok(self.factors[self.index_of(label)?].1)
    }

    /// Flat index of a product basis state, factor indices in layout order.
    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(self.dims()).fold(0, |acc, (&i, d)| acc * d + i)
    }

    /// Inverse of [`flat_index`](Self::flat_index).
    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let dims = self.dims();
        let mut out = vec![0; dims.len()];
        for k in (0..dims.len()).rev() {
            out[k] = flat % dims[k];
            flat /= dims[k];
        }
        out
    }
}

/// Square complex matrix on a layout.
#[derive(Clone, Debug)]
pub struct Operator {
    layout: SpaceLayout,
    mat: Array2<C64>,
}

fn check_square(layout: &SpaceLayout, mat: &Array2<C64>) -> Result<()> {
    let d = layout.total_dim();
    if mat.nrows() != mat.ncols() {
        return Err(Error::DimensionMismatch { expected: mat.nrows(), found: mat.ncols() });
    }
    if mat.nrows() != d {
        return Err(Error::DimensionMismatch { expected: d, found: mat.nrows() });
    }
    Ok(())
}

impl Operator {
    pub fn new(layout: SpaceLayout, mat: Array2<C64>) -> Result<Self> {
        check_square(&layout, &mat)?;
        if mat.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidParameter("operator has non-finite entries".into()));
        }
        Ok(Operator { layout, mat })
    }

    pub fn from_matrix(mat: Array2<C64>) -> Result<Self> {
        Self::new(SpaceLayout::single(mat.nrows()), mat)
    }

    pub fn identity(layout: &SpaceLayout) -> Self {
        let d = layout.total_dim();
        Operator { layout: layout.clone(), mat: Array2::eye(d) }
    }

    pub fn zeros(layout: &SpaceLayout) -> Self {
        let d = layout.total_dim();
        Operator { layout: layout.clone(), mat: Array2::zeros((d, d)) }
    }

    pub fn layout(&self) -> &SpaceLayout {
        &self.layout
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.mat
    }

    pub fn into_matrix(self) -> Array2<C64> {
        self.mat
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn adjoint(&self) -> Self {
        Operator { layout: self.layout.clone(), mat: dagger(&self.mat) }
    }

    pub fn scale(&self, s: C64) -> Self {
        Operator { layout: self.layout.clone(), mat: self.mat.mapv(|z| z * s) }
    }

    pub fn scale_re(&self, s: f64) -> Self {
        self.scale(C64::new(s, 0.0))
    }

    pub fn commutator(&self, other: &Operator) -> Self {
        let m = self.mat.dot(&other.mat) - other.mat.dot(&self.mat);
        Operator { layout: self.layout.clone(), mat: m }
    }

    pub fn trace(&self) -> C64 {
        linalg::trace(&self.mat)
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(self.mat.view())
    }

    pub fn hermiticity_defect(&self) -> f64 {
        max_abs((&self.mat - &dagger(&self.mat)).view())
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol * self.max_abs().max(1.0)
    }

    pub fn kron(&self, other: &Operator) -> Self {
        let mut f = self.layout.factors.clone();
        f.extend(other.layout.factors.iter().cloned());
        Operator { layout: SpaceLayout { factors: f }, mat: kron(&self.mat, &other.mat) }
    }

    /// Same matrix on a different layout of equal total dimension.
    pub fn with_layout(self, layout: &SpaceLayout) -> Result<Self> {
        check_square(layout, &self.mat)?;
        Ok(Operator { layout: layout.clone(), mat: self.mat })
    }

    pub fn eigenvalues_hermitian(&self) -> Result<Array1<f64>> {
        linalg::eigvalsh(&self.mat)
    }

    pub fn expect(&self, state: &DensityState) -> C64 {
        expect_matrix(&self.mat, state.matrix())
    }
}

/// Tr[A rho] without forming the product.
pub fn expect_matrix(a: &Array2<C64>, rho: &Array2<C64>) -> C64 {
    let n = a.nrows();
    let mut s = ZERO;
    for i in 0..n {
        for k in 0..n {
            s += a[[i, k]] * rho[[k, i]];
        }
    }
    s
}

impl<'a> Add for &'a Operator {
    type Output = Operator;
    fn add(self, rhs: &'a Operator) -> Operator {
        Operator { layout: self.layout.clone(), mat: &self.mat + &rhs.mat }
    }
}

impl<'a> Sub for &'a Operator {
    type Output = Operator;
    fn sub(self, rhs: &'a Operator) -> Operator {
        Operator { layout: self.layout.clone(), mat: &self.mat - &rhs.mat }
    }
}

impl<'a> Mul for &'a Operator {
    type Output = Operator;
    fn mul(self, rhs: &'a Operator) -> Operator {
        Operator { layout: self.layout.clone(), mat: self.mat.dot(&rhs.mat) }
    }
}

/// Bosonic lowering operator truncated to `dim` Fock states.
pub fn annihilation(dim: usize) -> Result<Operator> {
    if dim < 2 {
        return Err(Error::InvalidDimension { dim, reason: "annihilation needs dim >= 2".into() });
    }
    let mut m = Array2::zeros((dim, dim));
    for n in 1..dim {
        m[[n - 1, n]] = C64::new((n as f64).sqrt(), 0.0);
    }
    Ok(Operator { layout: SpaceLayout::single(dim), mat: m })
}

pub fn number(dim: usize) -> Result<Operator> {
    let a = annihilation(dim)?;
    Ok(&a.adjoint() * &a)
}

/// D(alpha) = exp(alpha a^dag - alpha^* a), built from the eigenbasis of the
/// Hermitian generator so the result is unitary to rounding.
pub fn displacement(dim: usize, alpha: C64) -> Result<Operator> {
    let a = annihilation(dim)?;
    if alpha == ZERO {
        return Ok(Operator::identity(&SpaceLayout::single(dim)));
    }
    // exp(X) with X = alpha a^dag - alpha^* a = -i H, H = i X.
    let x = a.adjoint().mat.mapv(|z| z * alpha) - a.mat.mapv(|z| z * alpha.conj());
    let h = x.mapv(|z| z * linalg::I);
    let u = linalg::expm_hermitian(&h, 1.0)?;
    Ok(Operator { layout: SpaceLayout::single(dim), mat: u })
}

/// Pauli and ladder operators of a two-level system, basis (|g>, |e>).
pub mod qubit {
    use super::*;

    fn m(entries: [[C64; 2]; 2]) -> Operator {
        let mat = Array2::from_shape_fn((2, 2), |(i, j)| entries[i][j]);
        Operator { layout: SpaceLayout::single(2), mat }
    }

    /// |g><e|
    pub fn sigma_minus() -> Operator {
        m([[ZERO, ONE], [ZERO, ZERO]])
    }

    pub fn sigma_plus() -> Operator {
        sigma_minus().adjoint()
    }

    pub fn sigma_x() -> Operator {
        m([[ZERO, ONE], [ONE, ZERO]])
    }

    pub fn sigma_y() -> Operator {
        m([[ZERO, -linalg::I], [linalg::I, ZERO]])
    }

    /// +1 on |e>, -1 on |g>.
    pub fn sigma_z() -> Operator {
        m([[-ONE, ZERO], [ZERO, ONE]])
    }
}

/// identity ⊗ … ⊗ op ⊗ … ⊗ identity at the factor named `label`.
pub fn embed(op: &Operator, layout: &SpaceLayout, label: &str) -> Result<Operator> {
    let k = layout.index_of(label)?;
    let dims = layout.dims();
    if op.dim() != dims[k] {
        return Err(Error::DimensionMismatch { expected: dims[k], found: op.dim() });
    }
    let left: usize = dims[..k].iter().product();
    let right: usize = dims[k + 1..].iter().product();
    let mut m = if left > 1 { kron(&Array2::eye(left), &op.mat) } else { op.mat.clone() };
    if right > 1 {
        m = kron(&m, &Array2::eye(right));
    }
    Ok(Operator { layout: layout.clone(), mat: m })
}

/// Validated density matrix.
#[derive(Clone, Debug)]
pub struct DensityState {
    layout: SpaceLayout,
    mat: Array2<C64>,
}

pub const HERMITIAN_TOL: f64 = 1e-12;
pub const TRACE_TOL: f64 = 1e-10;
pub const POSITIVITY_TOL: f64 = 1e-10;

impl DensityState {
    pub fn new(layout: SpaceLayout, mat: Array2<C64>) -> Result<Self> {
        check_square(&layout, &mat)?;
        let herm = max_abs((&mat - &dagger(&mat)).view());
        if herm > HERMITIAN_TOL {
            return Err(Error::InvalidState(format!("hermiticity defect {herm:.3e}")));
        }
        let tr = linalg::trace(&mat);
        if (tr - ONE).norm() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace {tr}")));
        }
        let ev = linalg::eigvalsh(&mat)?;
        if ev[0] < -POSITIVITY_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {:.3e}", ev[0])));
        }
        Ok(DensityState { layout, mat })
    }

    /// Wraps a matrix produced by the integrator; symmetrizes the rounding
    /// asymmetry but does not check positivity.
    pub fn from_raw(layout: SpaceLayout, mat: Array2<C64>) -> Result<Self> {
        check_square(&layout, &mat)?;
        Ok(DensityState { layout, mat: linalg::hermitize(&mat) })
    }

    pub fn pure(layout: SpaceLayout, ket: &Array1<C64>) -> Result<Self> {
        let nrm = ket.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if nrm == 0.0 || !nrm.is_finite() {
            return Err(Error::InvalidState("zero ket".into()));
        }
        let k = ket.mapv(|z| z / nrm);
        let n = k.len();
        let mat = Array2::from_shape_fn((n, n), |(i, j)| k[i] * k[j].conj());
        check_square(&layout, &mat)?;
        Ok(DensityState { layout, mat })
    }

    /// Product basis state |idx_0, idx_1, …>.
    pub fn basis(layout: &SpaceLayout, idx: &[usize]) -> Result<Self> {
        let dims = layout.dims();
        if idx.len() != dims.len() || idx.iter().zip(&dims).any(|(i, d)| i >= d) {
            return Err(Error::InvalidParameter(format!("basis index {idx:?} outside {dims:?}")));
        }
        let mut ket = Array1::zeros(layout.total_dim());
        ket[layout.flat_index(idx)] = ONE;
        Self::pure(layout.clone(), &ket)
    }

    /// Thermal state of a single bosonic factor.
    pub fn thermal(dim: usize, n_th: f64) -> Result<Self> {
        if n_th < 0.0 {
            return Err(Error::InvalidParameter("n_th < 0".into()));
        }
        let mut p: Vec<f64> =
            (0..dim).map(|n| if n_th == 0.0 { if n == 0 { 1.0 } else { 0.0 } } else { (n_th / (1.0 + n_th)).powi(n as i32) }).collect();
        let s: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= s);
        let mut m = Array2::zeros((dim, dim));
        for (n, x) in p.into_iter().enumerate() {
            m[[n, n]] = C64::new(x, 0.0);
        }
        Ok(DensityState { layout: SpaceLayout::single(dim), mat: m })
    }

    pub fn layout(&self) -> &SpaceLayout {
        &self.layout
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.mat
    }

    pub fn into_matrix(self) -> Array2<C64> {
        self.mat
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn trace(&self) -> C64 {
        linalg::trace(&self.mat)
    }

    pub fn purity(&self) -> f64 {
        self.mat.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn eigenvalues(&self) -> Result<Array1<f64>> {
        linalg::eigvalsh(&self.mat)
    }

    pub fn tensor(&self, other: &DensityState) -> DensityState {
        let mut f = self.layout.factors.clone();
        f.extend(other.layout.factors.iter().cloned());
        DensityState { layout: SpaceLayout { factors: f }, mat: kron(&self.mat, &other.mat) }
    }

    pub fn with_layout(self, layout: &SpaceLayout) -> Result<Self> {
        check_square(layout, &self.mat)?;
        Ok(DensityState { layout: layout.clone(), mat: self.mat })
    }

    /// U rho U^dag.
    pub fn conjugate(&self, u: &Operator) -> Result<Self> {
        if u.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: u.dim() });
        }
        let m = u.mat.dot(&self.mat).dot(&dagger(&u.mat));
        Ok(DensityState { layout: self.layout.clone(), mat: linalg::hermitize(&m) })
    }

    /// (1/2)·sum|eigenvalues of (rho - sigma)|.
    pub fn trace_distance(&self, other: &DensityState) -> Result<f64> {
        trace_distance(&self.mat, &other.mat)
    }

    /// Reduced state on the factor `keep`.
    pub fn partial_trace(&self, keep: &str) -> Result<DensityState> {
        let k = self.layout.index_of(keep)?;
        let dims = self.layout.dims();
        let left: usize = dims[..k].iter().product();
        let dk = dims[k];
        let right: usize = dims[k + 1..].iter().product();
        let mut out = Array2::zeros((dk, dk));
        for i in 0..dk {
            for j in 0..dk {
                let mut s = ZERO;
                for l in 0..left {
                    for r in 0..right {
                        let a = (l * dk + i) * right + r;
                        let b = (l * dk + j) * right + r;
                        s += self.mat[[a, b]];
                    }
                }
                out[[i, j]] = s;
            }
        }
        let layout = SpaceLayout::new(vec![(keep, dk)])?;
        Ok(DensityState { layout, mat: out })
    }
}

pub fn trace_distance(a: &Array2<C64>, b: &Array2<C64>) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.nrows(), found: b.nrows() });
    }
    let ev = linalg::eigvalsh(&(a - b))?;
    Ok(0.5 * ev.iter().map(|x| x.abs()).sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout_qc(dc: usize) -> SpaceLayout {
        SpaceLayout::new(vec![("qubit", 2), ("cavity", dc)]).unwrap()
    }

    #[test]
    fn annihilation_small_dims() {
        let a = annihilation(2).unwrap();
        assert_eq!(a.matrix()[[0, 1]], ONE);
        assert_eq!(a.matrix()[[1, 0]], ZERO);
        let a3 = annihilation(3).unwrap();
        assert!((a3.matrix()[[1, 2]].re - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(a3.matrix().iter().filter(|z| **z != ZERO).count(), 2);
        assert!(annihilation(1).is_err());
    }

    #[test]
    fn commutator_truncation_artifact() {
        let d = 7;
        let a = annihilation(d).unwrap();
        let c = a.commutator(&a.adjoint());
        for n in 0..d - 1 {
            assert!((c.matrix()[[n, n]] - ONE).norm() < 1e-14);
        }
        assert!((c.matrix()[[d - 1, d - 1]].re - (1.0 - d as f64)).abs() < 1e-13);
    }

    #[test]
    fn displacement_zero_is_identity() {
        let d = displacement(10, ZERO).unwrap();
        assert!(max_abs((d.matrix() - &Array2::<C64>::eye(10)).view()) == 0.0);
    }

    #[test]
    fn displacement_inverse() {
        let al = C64::from_polar(1.0, 0.4);
        let p = &displacement(40, al).unwrap() * &displacement(40, -al).unwrap();
        assert!(max_abs((p.matrix() - &Array2::<C64>::eye(40)).view()) < 1e-10);
    }

    #[test]
    fn displacement_shifts_annihilation_on_low_block() {
        let d = 40;
        let al = C64::from_polar(1.0, -1.1);
        let dd = displacement(d, al).unwrap();
        let a = annihilation(d).unwrap();
        let lhs = &(&dd.adjoint() * &a) * &dd;
        for i in 0..d / 2 {
            for j in 0..d / 2 {
                let want = a.matrix()[[i, j]] + if i == j { al } else { ZERO };
                assert!((lhs.matrix()[[i, j]] - want).norm() < 1e-8, "({i},{j})");
            }
        }
    }

    #[test]
    fn embed_properties() {
        let l = layout_qc(4);
        let sz = embed(&qubit::sigma_z(), &l, "qubit").unwrap();
        let a = embed(&annihilation(4).unwrap(), &l, "cavity").unwrap();
        assert!(sz.commutator(&a).max_abs() < 1e-15);
        let id = embed(&Operator::identity(&SpaceLayout::single(4)), &l, "cavity").unwrap();
        assert!((id.matrix() - &Array2::<C64>::eye(8)).iter().all(|z| *z == ZERO));
        let n = number(4).unwrap();
        let en = embed(&n, &l, "cavity").unwrap();
        assert!((en.trace() - n.trace() * 2.0).norm() < 1e-12);
        assert!(matches!(embed(&n, &l, "filter"), Err(Error::LabelNotFound(_))));
        assert!(matches!(embed(&n, &layout_qc(5), "cavity"), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn partial_trace_of_bell_state() {
        let l = SpaceLayout::new(vec![("a", 2), ("b", 2)]).unwrap();
        let s = 0.5f64.sqrt();
        let ket = Array1::from(vec![C64::new(s, 0.0), ZERO, ZERO, C64::new(s, 0.0)]);
        let rho = DensityState::pure(l, &ket).unwrap();
        for k in ["a", "b"] {
            let r = rho.partial_trace(k).unwrap();
            assert!((r.matrix()[[0, 0]].re - 0.5).abs() < 1e-14);
            assert!(r.matrix()[[0, 1]].norm() < 1e-14);
        }
    }

    #[test]
    fn partial_trace_of_product() {
        let rq = DensityState::new(
            SpaceLayout::new(vec![("qubit", 2)]).unwrap(),
            Array2::from_shape_vec((2, 2), vec![C64::new(0.3, 0.0), C64::new(0.1, 0.2), C64::new(0.1, -0.2), C64::new(0.7, 0.0)])
                .unwrap(),
        )
        .unwrap();
        let rc = DensityState::thermal(5, 0.4).unwrap().with_layout(&SpaceLayout::new(vec![("cavity", 5)]).unwrap()).unwrap();
        let p = rq.tensor(&rc);
        let back = p.partial_trace("qubit").unwrap();
        assert!(max_abs((back.matrix() - rq.matrix()).view()) < 1e-12);
        let back = p.partial_trace("cavity").unwrap();
        assert!(max_abs((back.matrix() - rc.matrix()).view()) < 1e-12);
    }

    #[test]
    fn density_validation() {
        let l = SpaceLayout::single(2);
        let bad = Array2::from_shape_vec((2, 2), vec![C64::new(1.2, 0.0), ZERO, ZERO, C64::new(-0.2, 0.0)]).unwrap();
        assert!(DensityState::new(l.clone(), bad).is_err());
        let bad = Array2::from_shape_vec((2, 2), vec![C64::new(0.6, 0.0), ZERO, ZERO, C64::new(0.6, 0.0)]).unwrap();
        assert!(DensityState::new(l, bad).is_err());
    }

    #[test]
    fn layout_rejects_duplicates_and_zero() {
        assert!(SpaceLayout::new(vec![("a", 2), ("a", 3)]).is_err());
        assert!(SpaceLayout::new(vec![("a", 0)]).is_err());
        let l = SpaceLayout::new(vec![("a", 2), ("b", 3), ("c", 4)]).unwrap();
        assert_eq!(l.total_dim(), 24);
        assert_eq!(l.multi_index(l.flat_index(&[1, 2, 3])), vec![1, 2, 3]);
    }
}
