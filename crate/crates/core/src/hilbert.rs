//! States and density operators on `L₂(Q, μ)` over the position grid.
//!
//! Operators are stored as matrices in the orthonormal grid basis
//! `e_i = 1_{cell i}/√h^d`, which coincides for the Lebesgue and the
//! Gaussian-weighted representation. The representation tag records which
//! function space a state's values, or an operator's kernel, refer to.

use std::fmt;
use std::sync::Arc;

use ndarray::{s, Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::C64;
use crate::lattice::{make_phase_space_with, PhaseSpaceSpec, TolerancePolicy};
use crate::linalg;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    Lebesgue,
    Gaussian,
}

impl Representation {
    pub fn name(self) -> &'static str {
        match self {
            Representation::Lebesgue => "lebesgue",
            Representation::Gaussian => "gaussian",
        }
    }
}

impl fmt::Display for Representation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One tensor factor: a position grid or a truncated oscillator with `n` levels.
#[derive(Clone, Debug, PartialEq)]
pub enum Factor {
    Grid(Arc<PhaseSpaceSpec>),
    Levels(usize),
}

impl Factor {
    pub fn dim(&self) -> usize {
        match self {
            Factor::Grid(s) => s.dim(),
            Factor::Levels(n) => *n,
        }
    }

    /// Degrees of freedom contributed to the phase space.
    pub fn dof(&self) -> usize {
        match self {
            Factor::Grid(s) => s.d(),
            Factor::Levels(_) => 1,
        }
    }

    /// Uniform Lebesgue quadrature weight of one basis cell.
    pub fn lebesgue_weight(&self) -> f64 {
        match self {
            Factor::Grid(s) => s.grid.position_cell(),
            Factor::Levels(_) => 1.0,
        }
    }

    /// Gaussian density factor at each basis index (one for level factors).
    pub fn gaussian_factor(&self) -> Array1<f64> {
        match self {
            Factor::Grid(s) => s.mu_on_grid(),
            Factor::Levels(n) => Array1::ones(*n),
        }
    }
}

/// Labeled tensor factors in fixed order, first factor slowest.
#[derive(Clone, Debug)]
pub struct CompositeSystem {
    labels: Vec<String>,
    factors: Vec<Factor>,
    dims: Vec<usize>,
    total: usize,
    merged: Option<Arc<PhaseSpaceSpec>>,
}

impl PartialEq for CompositeSystem {
    fn eq(&self, other: &Self) -> bool {
        self.labels == other.labels && self.factors == other.factors
    }
}

impl CompositeSystem {
    pub fn new(parts: Vec<(String, Factor)>) -> Result<Arc<Self>> {
        if parts.is_empty() {
            return Err(Error::SpecMismatch("a system needs at least one factor".into()));
        }
        let mut labels = Vec::new();
        let mut factors = Vec::new();
        for (l, f) in parts {
            if labels.contains(&l) {
                return Err(Error::SpecMismatch(format!("duplicate subsystem label `{l}`")));
            }
            if f.dim() == 0 {
                return Err(Error::SpecMismatch(format!("factor `{l}` has dimension zero")));
            }
            labels.push(l);
            factors.push(f);
        }
        let dims: Vec<usize> = factors.iter().map(Factor::dim).collect();
        let total = dims.iter().product();
        let merged = merge_grids(&factors);
        Ok(Arc::new(Self { labels, factors, dims, total, merged }))
    }

    /// A single grid factor labeled `Q`.
    pub fn single(spec: Arc<PhaseSpaceSpec>) -> Arc<Self> {
        Self::new(vec![("Q".into(), Factor::Grid(spec))]).expect("single factor")
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.total
    }

    pub fn dof(&self) -> usize {
        self.factors.iter().map(Factor::dof).sum()
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.labels.iter().position(|l| l == label).ok_or_else(|| Error::UnknownSubsystem(label.to_string()))
    }

    pub fn factor(&self, label: &str) -> Result<&Factor> {
        Ok(&self.factors[self.index_of(label)?])
    }

    /// The joint phase space when every factor is a grid with common `n` and `L`.
    pub fn phase_space(&self) -> Option<&Arc<PhaseSpaceSpec>> {
        self.merged.as_ref()
    }

    pub fn require_phase_space(&self) -> Result<&Arc<PhaseSpaceSpec>> {
        self.merged
            .as_ref()
            .ok_or_else(|| Error::SpecMismatch("system has no joint phase grid (level factor or unequal grids)".into()))
    }

    /// The kept factors in their original order.
    pub fn subsystem(&self, keep: &[&str]) -> Result<Arc<Self>> {
        let mut idx = Vec::new();
        for k in keep {
            let i = self.index_of(k)?;
            if !idx.contains(&i) {
                idx.push(i);
            }
        }
        idx.sort_unstable();
        Self::new(idx.iter().map(|&i| (self.labels[i].clone(), self.factors[i].clone())).collect())
    }

    pub fn concat(&self, other: &Self) -> Result<Arc<Self>> {
        let mut parts: Vec<(String, Factor)> = self.labels.iter().cloned().zip(self.factors.iter().cloned()).collect();
        parts.extend(other.labels.iter().cloned().zip(other.factors.iter().cloned()));
        Self::new(parts)
    }

    pub fn lebesgue_weight(&self) -> f64 {
        self.factors.iter().map(Factor::lebesgue_weight).product()
    }

    /// Gaussian density factor on the composite basis (product over grid factors).
    pub fn gaussian_factor(&self) -> Array1<f64> {
        let mut acc = Array1::ones(1);
        for f in &self.factors {
            let g = f.gaussian_factor();
            acc = Array1::from_shape_fn(acc.len() * g.len(), |k| acc[k / g.len()] * g[k % g.len()]);
        }
        acc
    }

    /// Quadrature weights of the tagged inner product.
    pub fn weights(&self, rep: Representation) -> Array1<f64> {
        let w = self.lebesgue_weight();
        match rep {
            Representation::Lebesgue => Array1::from_elem(self.total, w),
            Representation::Gaussian => self.gaussian_factor().mapv(|g| g * w),
        }
    }

    pub fn policy(&self) -> TolerancePolicy {
        self.factors
            .iter()
            .find_map(|f| match f {
                Factor::Grid(s) => Some(s.policy.clone()),
                Factor::Levels(_) => None,
            })
            .unwrap_or_default()
    }
}

fn merge_grids(factors: &[Factor]) -> Option<Arc<PhaseSpaceSpec>> {
    let specs: Vec<&Arc<PhaseSpaceSpec>> = factors
        .iter()
        .map(|f| match f {
            Factor::Grid(s) => Some(s),
            Factor::Levels(_) => None,
        })
        .collect::<Option<_>>()?;
    if specs.len() == 1 {
        return Some(specs[0].clone());
    }
    let first = specs[0];
    if specs.iter().any(|s| s.n() != first.n() || s.half_width() != first.half_width()) {
        return None;
    }
    let d: usize = specs.iter().map(|s| s.d()).sum();
    let mut cov = Array2::zeros((d, d));
    let mut off = 0;
    for s in &specs {
        let k = s.d();
        cov.slice_mut(s![off..off + k, off..off + k]).assign(s.covariance());
        off += k;
    }
    let mut policy = first.policy.clone();
    policy.tail_mass *= specs.len() as f64;
    make_phase_space_with(d, first.n(), first.half_width(), cov, policy).ok()
}

fn check_same_system(a: &CompositeSystem, b: &CompositeSystem) -> Result<()> {
    if a != b {
        return Err(Error::SpecMismatch(format!(
            "operands live on different systems {:?} and {:?}",
            a.labels, b.labels
        )));
    }
    Ok(())
}

/// Function values on the composite grid in the tagged function space.
#[derive(Clone, Debug)]
pub struct StateVector {
    values: Array1<C64>,
    rep: Representation,
    system: Arc<CompositeSystem>,
}

impl StateVector {
    pub fn new(values: Array1<C64>, rep: Representation, system: Arc<CompositeSystem>) -> Result<Self> {
        let s = Self::unchecked(values, rep, system)?;
        let nsq = s.norm_sq();
        if (nsq - 1.0).abs() > s.system.policy().state_norm {
            return Err(Error::UnnormalizedState { norm_sq: nsq });
        }
        Ok(s)
    }

    /// Rescales `values` to unit norm.
    pub fn normalized(values: Array1<C64>, rep: Representation, system: Arc<CompositeSystem>) -> Result<Self> {
        let mut s = Self::unchecked(values, rep, system)?;
        let nsq = s.norm_sq();
        if !(nsq > 0.0 && nsq.is_finite()) {
            return Err(Error::UnnormalizedState { norm_sq: nsq });
        }
        let k = 1.0 / nsq.sqrt();
        s.values.mapv_inplace(|v| v * k);
        Ok(s)
    }

    /// Builds a state from orthonormal-basis coefficients.
    pub fn from_coefficients(coeffs: Array1<C64>, rep: Representation, system: Arc<CompositeSystem>) -> Result<Self> {
        if coeffs.len() != system.dim() {
            return Err(Error::SpecMismatch(format!("expected {} coefficients, got {}", system.dim(), coeffs.len())));
        }
        let w = system.weights(rep);
        let values = Array1::from_shape_fn(coeffs.len(), |i| coeffs[i] / w[i].sqrt());
        Self::normalized(values, rep, system)
    }

    fn unchecked(values: Array1<C64>, rep: Representation, system: Arc<CompositeSystem>) -> Result<Self> {
        if values.len() != system.dim() {
            return Err(Error::SpecMismatch(format!("expected {} values, got {}", system.dim(), values.len())));
        }
        Ok(Self { values, rep, system })
    }

    pub fn values(&self) -> &Array1<C64> {
        &self.values
    }

    pub fn rep(&self) -> Representation {
        self.rep
    }

    pub fn system(&self) -> &Arc<CompositeSystem> {
        &self.system
    }

    /// Coefficients in the orthonormal grid basis, `v_i √w_i`.
    pub fn coefficients(&self) -> Array1<C64> {
        let w = self.system.weights(self.rep);
        Array1::from_shape_fn(self.values.len(), |i| self.values[i] * w[i].sqrt())
    }

    pub fn norm_sq(&self) -> f64 {
        let w = self.system.weights(self.rep);
        self.values.iter().zip(w.iter()).map(|(v, w)| v.norm_sqr() * w).sum()
    }

    /// Tagged inner product `⟨self, other⟩`, conjugate-linear in `self`.
    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        check_same_system(&self.system, &other.system)?;
        let a = self.coefficients();
        let b = other.coefficients();
        Ok(a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum())
    }

    pub fn to_gaussian_rep(&self) -> Result<Self> {
        if self.rep != Representation::Lebesgue {
            return Err(Error::WrongRepresentation { expected: "lebesgue", found: self.rep.name() });
        }
        let g = self.system.gaussian_factor();
        let values = Array1::from_shape_fn(self.values.len(), |i| self.values[i] / g[i].sqrt());
        Ok(Self { values, rep: Representation::Gaussian, system: self.system.clone() })
    }

    pub fn to_lebesgue_rep(&self) -> Result<Self> {
        if self.rep != Representation::Gaussian {
            return Err(Error::WrongRepresentation { expected: "gaussian", found: self.rep.name() });
        }
        let g = self.system.gaussian_factor();
        let values = Array1::from_shape_fn(self.values.len(), |i| self.values[i] * g[i].sqrt());
        Ok(Self { values, rep: Representation::Lebesgue, system: self.system.clone() })
    }

    pub fn in_rep(&self, rep: Representation) -> Self {
        if rep == self.rep {
            self.clone()
        } else if rep == Representation::Gaussian {
            self.to_gaussian_rep().expect("lebesgue input")
        } else {
            self.to_lebesgue_rep().expect("gaussian input")
        }
    }
}

/// Hermitian, positive semidefinite, trace-one operator in the orthonormal grid basis.
#[derive(Clone, Debug)]
pub struct DensityOperator {
    matrix: Array2<C64>,
    rep: Representation,
    system: Arc<CompositeSystem>,
}

impl DensityOperator {
    /// Validates Hermiticity, trace and positivity; the stored matrix is symmetrized.
    pub fn new(matrix: Array2<C64>, rep: Representation, system: Arc<CompositeSystem>) -> Result<Self> {
        let dim = system.dim();
        if matrix.dim() != (dim, dim) {
            return Err(Error::SpecMismatch(format!("expected a {dim}x{dim} matrix, got {:?}", matrix.dim())));
        }
        let policy = system.policy();
        let dev = linalg::hermitian_deviation(&matrix);
        if dev > policy.hermitian {
            return Err(Error::NotHermitian { deviation: dev });
        }
        let matrix = linalg::symmetrize(&matrix);
        let tr = linalg::trace(&matrix).re;
        if (tr - 1.0).abs() > policy.trace {
            return Err(Error::NotTraceOne { trace: tr });
        }
        let out = Self { matrix, rep, system };
        let min = out.min_eigenvalue()?;
        if min < -policy.psd_floor {
            return Err(Error::NotPositive { min_eigenvalue: min });
        }
        Ok(out)
    }

    pub(crate) fn trusted(matrix: Array2<C64>, rep: Representation, system: Arc<CompositeSystem>) -> Self {
        debug_assert_eq!(matrix.nrows(), system.dim());
        Self { matrix, rep, system }
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> Array2<C64> {
        self.matrix
    }

    pub fn rep(&self) -> Representation {
        self.rep
    }

    pub fn system(&self) -> &Arc<CompositeSystem> {
        &self.system
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> f64 {
        linalg::trace(&self.matrix).re
    }

    pub fn purity(&self) -> f64 {
        self.matrix.iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn eigenvalues(&self) -> Result<Array1<f64>> {
        linalg::eigvalsh(&self.matrix)
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(self.eigenvalues()?.iter().cloned().fold(f64::INFINITY, f64::min))
    }

    /// Re-runs the constructor checks.
    pub fn validate(&self) -> Result<()> {
        Self::new(self.matrix.clone(), self.rep, self.system.clone()).map(|_| ())
    }

    /// `⟨φ|T|φ⟩` for a normalized state.
    pub fn fidelity(&self, phi: &StateVector) -> Result<f64> {
        check_same_system(&self.system, &phi.system)?;
        let c = phi.coefficients();
        let tc = self.matrix.dot(&c);
        Ok(c.iter().zip(tc.iter()).map(|(a, b)| a.conj() * b).sum::<C64>().re)
    }

    /// `Tφ`, returned in the representation of `φ`.
    pub fn apply(&self, phi: &StateVector) -> Result<StateVector> {
        check_same_system(&self.system, &phi.system)?;
        let c = self.matrix.dot(&phi.coefficients());
        let w = self.system.weights(phi.rep);
        let values = Array1::from_shape_fn(c.len(), |i| c[i] / w[i].sqrt());
        Ok(StateVector { values, rep: phi.rep, system: phi.system.clone() })
    }

    /// Matrix acting on function values of the tagged space, `W^{-1/2} M W^{1/2}`.
    pub fn function_matrix(&self) -> Array2<C64> {
        let w = self.system.weights(self.rep);
        Array2::from_shape_fn(self.matrix.dim(), |(i, l)| self.matrix[[i, l]] * (w[l] / w[i]).sqrt())
    }

    pub fn to_gaussian_rep(&self) -> Result<Self> {
        if self.rep != Representation::Lebesgue {
            return Err(Error::WrongRepresentation { expected: "lebesgue", found: self.rep.name() });
        }
        Ok(Self { rep: Representation::Gaussian, ..self.clone() })
    }

    pub fn to_lebesgue_rep(&self) -> Result<Self> {
        if self.rep != Representation::Gaussian {
            return Err(Error::WrongRepresentation { expected: "gaussian", found: self.rep.name() });
        }
        Ok(Self { rep: Representation::Lebesgue, ..self.clone() })
    }

    pub fn with_system(&self, system: Arc<CompositeSystem>) -> Result<Self> {
        if system.dims() != self.system.dims() {
            return Err(Error::SpecMismatch("factor dimensions differ".into()));
        }
        Ok(Self { system, ..self.clone() })
    }
}

/// `|φ⟩⟨φ|`.
pub fn pure_density(phi: &StateVector) -> Result<DensityOperator> {
    let nsq = phi.norm_sq();
    if (nsq - 1.0).abs() > phi.system.policy().state_norm {
        return Err(Error::UnnormalizedState { norm_sq: nsq });
    }
    let c = phi.coefficients();
    let n = c.len();
    let m = Array2::from_shape_fn((n, n), |(i, l)| c[i] * c[l].conj());
    Ok(DensityOperator::trusted(m, phi.rep, phi.system.clone()))
}

/// Convex combination `Σ p_k T_k`; weights must be non-negative and sum to one.
pub fn mix(parts: &[(f64, &DensityOperator)]) -> Result<DensityOperator> {
    let (_, first) = parts.first().ok_or_else(|| Error::SpecMismatch("empty mixture".into()))?;
    let total: f64 = parts.iter().map(|(p, _)| *p).sum();
    if parts.iter().any(|(p, _)| *p < 0.0) || (total - 1.0).abs() > first.system.policy().trace {
        return Err(Error::NotTraceOne { trace: total });
    }
    let mut m = Array2::<C64>::zeros(first.matrix.dim());
    for (p, t) in parts {
        check_same_system(&first.system, &t.system)?;
        if t.rep != first.rep {
            return Err(Error::RepresentationMismatch);
        }
        m.scaled_add(C64::new(*p, 0.0), &t.matrix);
    }
    Ok(DensityOperator::trusted(m, first.rep, first.system.clone()))
}

/// `a ⊗ b` on `sys`, whose factors must be those of `a` followed by those of `b`.
pub fn tensor(a: &DensityOperator, b: &DensityOperator, sys: &Arc<CompositeSystem>) -> Result<DensityOperator> {
    if a.rep != b.rep {
        return Err(Error::RepresentationMismatch);
    }
    let mut expected: Vec<Factor> = a.system.factors().to_vec();
    expected.extend(b.system.factors().iter().cloned());
    if sys.factors() != expected.as_slice() {
        return Err(Error::SpecMismatch("composite factors do not match the operands".into()));
    }
    Ok(DensityOperator::trusted(linalg::kron(&a.matrix, &b.matrix), a.rep, sys.clone()))
}

/// Reduced operator on the kept subsystems (original factor order).
pub fn partial_trace(t: &DensityOperator, keep: &[&str]) -> Result<DensityOperator> {
    let sub = t.system.subsystem(keep)?;
    let idx: Vec<usize> = sub.labels().iter().map(|l| t.system.index_of(l)).collect::<Result<_>>()?;
    let m = linalg::partial_trace_factors(&t.matrix, t.system.dims(), &idx);
    Ok(DensityOperator::trusted(m, t.rep, sub))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    /// Function-valued kernel `ρ(q, q')` paired with `μ(dq')` after Gaussian reweighting.
    Rho1,
    /// Kernel whose second argument is a measure, stored as density × cell.
    Rho2,
}

/// Integral kernel of a density operator on the grid².
#[derive(Clone, Debug)]
pub struct IntegralKernel {
    pub values: Array2<C64>,
    pub kind: KernelKind,
    system: Arc<CompositeSystem>,
}

impl IntegralKernel {
    pub fn system(&self) -> &Arc<CompositeSystem> {
        &self.system
    }

    /// `Tφ` from the kernel by quadrature; the output is in the Gaussian representation.
    pub fn apply(&self, phi: &StateVector) -> Result<StateVector> {
        check_same_system(&self.system, &phi.system)?;
        let phi = phi.in_rep(Representation::Gaussian);
        let g = self.system.gaussian_factor();
        let cell = match self.kind {
            KernelKind::Rho1 => self.system.lebesgue_weight(),
            KernelKind::Rho2 => 1.0,
        };
        let n = g.len();
        let src = Array1::from_shape_fn(n, |l| phi.values[l] * g[l].sqrt() * cell);
        let k = self.values.dot(&src);
        let values = Array1::from_shape_fn(n, |i| k[i] / g[i].sqrt());
        Ok(StateVector { values, rep: Representation::Gaussian, system: self.system.clone() })
    }

    pub fn to_kind(&self, kind: KernelKind) -> Self {
        let w = self.system.lebesgue_weight();
        let scale = match (self.kind, kind) {
            (KernelKind::Rho1, KernelKind::Rho2) => w,
            (KernelKind::Rho2, KernelKind::Rho1) => 1.0 / w,
            _ => 1.0,
        };
        Self { values: self.values.mapv(|v| v * scale), kind, system: self.system.clone() }
    }
}

pub fn kernel_of(t: &DensityOperator, kind: KernelKind) -> IntegralKernel {
    let scale = match kind {
        KernelKind::Rho1 => 1.0 / t.system.lebesgue_weight(),
        KernelKind::Rho2 => 1.0,
    };
    IntegralKernel { values: t.matrix.mapv(|v| v * scale), kind, system: t.system.clone() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::make_phase_space;
    use ndarray::arr2;
    use std::f64::consts::PI;

    fn sys() -> Arc<CompositeSystem> {
        CompositeSystem::single(make_phase_space(1, 64, 7.5, arr2(&[[1.0]])).unwrap())
    }

    fn ground(sys: &Arc<CompositeSystem>) -> StateVector {
        let spec = sys.require_phase_space().unwrap();
        let x = spec.grid.axis.positions();
        let v = x.mapv(|x| C64::new(PI.powf(-0.25) * (-x * x / 2.0).exp(), 0.0));
        StateVector::new(v, Representation::Lebesgue, sys.clone()).unwrap()
    }

    #[test]
    fn ground_state_in_gaussian_rep() {
        let s = sys();
        let psi = ground(&s);
        let phi = psi.to_gaussian_rep().unwrap();
        let x = s.require_phase_space().unwrap().grid.axis.positions();
        for (i, &xi) in x.iter().enumerate() {
            let want = PI.powf(-0.25) * (2.0 * PI).powf(0.25) * (-xi * xi / 4.0).exp();
            assert!((phi.values()[i].re - want).abs() < 1e-12);
        }
        assert!((phi.norm_sq() - 1.0).abs() < 1e-10);
        assert!((psi.norm_sq() - 1.0).abs() < 1e-10);
        let back = phi.to_lebesgue_rep().unwrap();
        for (a, b) in back.values().iter().zip(psi.values().iter()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn wrong_representation_is_rejected() {
        let psi = ground(&sys());
        assert!(matches!(psi.to_lebesgue_rep(), Err(Error::WrongRepresentation { .. })));
        let t = pure_density(&psi).unwrap();
        assert!(matches!(t.to_lebesgue_rep(), Err(Error::WrongRepresentation { .. })));
        let g = t.to_gaussian_rep().unwrap();
        assert!((g.trace() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn pure_state_is_rank_one() {
        let t = pure_density(&ground(&sys())).unwrap();
        assert!((t.purity() - 1.0).abs() < 1e-8);
        let ev = t.eigenvalues().unwrap();
        assert!((ev[ev.len() - 1] - 1.0).abs() < 1e-8);
        assert!(ev[ev.len() - 2].abs() < 1e-8);
        t.validate().unwrap();
    }

    #[test]
    fn unnormalized_state_is_rejected() {
        let s = sys();
        let v = Array1::from_elem(64, C64::new(1.0, 0.0));
        assert!(matches!(StateVector::new(v, Representation::Lebesgue, s), Err(Error::UnnormalizedState { .. })));
    }

    #[test]
    fn constructor_rejects_invalid_operators() {
        let s = CompositeSystem::new(vec![("A".into(), Factor::Levels(2))]).unwrap();
        let c = |r: f64, i: f64| C64::new(r, i);
        let non_herm = arr2(&[[c(0.5, 0.0), c(0.1, 0.0)], [c(0.2, 0.0), c(0.5, 0.0)]]);
        assert!(matches!(
            DensityOperator::new(non_herm, Representation::Lebesgue, s.clone()),
            Err(Error::NotHermitian { .. })
        ));
        let bad_trace = arr2(&[[c(0.6, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(0.5, 0.0)]]);
        assert!(matches!(
            DensityOperator::new(bad_trace, Representation::Lebesgue, s.clone()),
            Err(Error::NotTraceOne { .. })
        ));
        let negative = arr2(&[[c(1.2, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(-0.2, 0.0)]]);
        assert!(matches!(DensityOperator::new(negative, Representation::Lebesgue, s), Err(Error::NotPositive { .. })));
    }

    #[test]
    fn mixture_of_orthogonal_states() {
        let s = CompositeSystem::new(vec![("A".into(), Factor::Levels(3))]).unwrap();
        let e = |k: usize| {
            let mut v = Array1::zeros(3);
            v[k] = C64::new(1.0, 0.0);
            pure_density(&StateVector::new(v, Representation::Lebesgue, s.clone()).unwrap()).unwrap()
        };
        let (a, b) = (e(0), e(2));
        let m = mix(&[(0.5, &a), (0.5, &b)]).unwrap();
        assert!((m.purity() - 0.5).abs() < 1e-8);
    }

    #[test]
    fn tensor_and_partial_trace_round_trip() {
        let a_sys = CompositeSystem::new(vec![("A".into(), Factor::Levels(2))]).unwrap();
        let b_sys = CompositeSystem::new(vec![("B".into(), Factor::Levels(3))]).unwrap();
        let c = |r: f64, i: f64| C64::new(r, i);
        let a = DensityOperator::new(
            arr2(&[[c(0.5, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(0.5, 0.0)]]),
            Representation::Lebesgue,
            a_sys.clone(),
        )
        .unwrap();
        let mut v = Array1::zeros(3);
        v[1] = c(0.6, 0.0);
        v[2] = c(0.0, 0.8);
        let b = pure_density(&StateVector::new(v, Representation::Lebesgue, b_sys.clone()).unwrap()).unwrap();
        let ab_sys = a_sys.concat(&b_sys).unwrap();
        let ab = tensor(&a, &b, &ab_sys).unwrap();
        assert!((ab.trace() - 1.0).abs() < 1e-12);
        let ra = partial_trace(&ab, &["A"]).unwrap();
        let rb = partial_trace(&ab, &["B"]).unwrap();
        assert!(linalg::max_abs_diff(ra.matrix(), a.matrix()) < 1e-10);
        assert!(linalg::max_abs_diff(rb.matrix(), b.matrix()) < 1e-10);
        assert!(matches!(partial_trace(&ab, &["Z"]), Err(Error::UnknownSubsystem(_))));
        assert!(matches!(tensor(&b, &a, &ab_sys), Err(Error::SpecMismatch(_))));
    }

    #[test]
    fn kernels_reproduce_the_operator() {
        let s = sys();
        let t = pure_density(&ground(&s)).unwrap();
        let spec = s.require_phase_space().unwrap();
        let x = spec.grid.axis.positions();
        let test = StateVector::normalized(
            x.mapv(|x| C64::new((-(x - 0.5) * (x - 0.5)).exp(), 0.3 * x * (-x * x).exp())),
            Representation::Lebesgue,
            s.clone(),
        )
        .unwrap();
        let direct = t.apply(&test).unwrap().to_gaussian_rep().unwrap();
        let k1 = kernel_of(&t, KernelKind::Rho1);
        let k2 = kernel_of(&t, KernelKind::Rho2);
        for k in [&k1, &k2] {
            let via = k.apply(&test).unwrap();
            for (a, b) in via.values().iter().zip(direct.values().iter()) {
                assert!((a - b).norm() < 1e-8);
            }
        }
        let conv = k1.to_kind(KernelKind::Rho2);
        assert!(linalg::max_abs_diff(&conv.values, &k2.values) < 1e-8);
        // ρ¹ of the ground state is π^{-1/2} e^{-(q²+q'²)/2}
        let i = 20;
        let l = 37;
        let want = PI.powf(-0.5) * (-(x[i] * x[i] + x[l] * x[l]) / 2.0).exp();
        assert!((k1.values[[i, l]].re - want).abs() < 1e-12);
    }

    #[test]
    fn normalized_projector_kernel_is_diagonal() {
        let s = sys();
        let n = s.dim();
        let m = Array2::from_diag_elem(n, C64::new(1.0 / n as f64, 0.0));
        let t = DensityOperator::new(m, Representation::Lebesgue, s).unwrap();
        let k = kernel_of(&t, KernelKind::Rho2);
        let diag: f64 = k.values.diag().iter().map(|v| v.re).sum();
        assert!((diag - 1.0).abs() < 1e-12);
        assert!(k.values.iter().enumerate().all(|(idx, v)| idx % (n + 1) == 0 || v.norm() == 0.0));
    }
}
