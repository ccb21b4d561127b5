//! Moyal evolution `Ẇ = 2 sin(½𝓛)W` of Wigner densities, its η-density form,
//! and the von Neumann propagator used to check it.
//!
//! The bracket of order `m` is the full contraction
//! `{Ψ, H}^{(m)} = Σ_{|α|=m} m!/α! · (-1)^{|α_p|} ∂^αΨ · ∂^{α̃}H`, where `α̃`
//! swaps the position and momentum halves of `α`. With this sign the first
//! bracket is the Poisson bracket `∂_qΨ ∂_pH - ∂_pΨ ∂_qH`, and the truncated
//! right-hand side is `Σ_{k=1..K} 2(-1)^k (1/2)^{2k-1}/(2k-1)! · {W, H}^{(2k-1)}`.

use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use ndarray::{ArrayD, Dimension, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{eta_on_lattice, sample_lattice, FieldRole, PhaseSpaceField};
use crate::fourier::{map_lanes, wavenumbers, CubeFft, C64};
use crate::hilbert::DensityOperator;
use crate::lattice::{GaussianMeasure, PhaseSpaceSpec};
use crate::linalg;
use crate::symbol::HamiltonianSymbol;
use crate::weyl::weyl_quantize;

/// Largest truncation count `K`; the highest bracket order is `2K - 1`.
pub const MAX_TRUNCATION: usize = 6;
/// Highest order accepted by [`gaussian_measure_derivative`].
pub const MAX_WICK_ORDER: usize = 4;
/// Default truncation count.
pub const DEFAULT_TRUNCATION: usize = 3;

const STEP_MASS_LIMIT: f64 = 1e-4;
const RUN_MASS_LIMIT: f64 = 1e-6;
const BOUNDARY_LIMIT: f64 = 1e-8;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeScheme {
    #[default]
    Spectral,
    FiniteDifference4th,
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

/// All multi-indices of length `dim` with entries summing to `order`.
pub fn multi_indices(dim: usize, order: usize) -> Vec<Vec<usize>> {
    fn rec(dim: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() + 1 == dim {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for k in (0..=left).rev() {
            cur.push(k);
            rec(dim, left - k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if dim > 0 {
        rec(dim, order, &mut Vec::with_capacity(dim), &mut out);
    }
    out
}

/// Swaps the position and momentum halves of a `2d` multi-index.
fn swap_halves(alpha: &[usize]) -> Vec<usize> {
    let d = alpha.len() / 2;
    let mut out = alpha[d..].to_vec();
    out.extend_from_slice(&alpha[..d]);
    out
}

/// Derivatives of real fields on one phase lattice.
pub struct Differentiator {
    scheme: DerivativeScheme,
    fft: CubeFft,
    wavenumbers: Vec<Vec<f64>>,
    spacing: Vec<f64>,
}

/// A field prepared for repeated differentiation.
pub struct Prepared<'a> {
    diff: &'a Differentiator,
    values: &'a ArrayD<f64>,
}

impl Differentiator {
    pub fn new(spec: &PhaseSpaceSpec, scheme: DerivativeScheme) -> Self {
        let ax = spec.axis();
        let len = ax.lattice_len();
        let d = spec.d();
        let mut spacing = vec![0.5 * ax.step(); d];
        spacing.extend(std::iter::repeat_n(ax.lattice_momentum_step(), d));
        let wavenumbers = spacing.iter().map(|&s| wavenumbers(len, s)).collect();
        Self { scheme, fft: CubeFft::new(len), wavenumbers, spacing }
    }

    pub fn scheme(&self) -> DerivativeScheme {
        self.scheme
    }

    pub fn prepare<'a>(&'a self, values: &'a ArrayD<f64>) -> Prepared<'a> {
        Prepared { diff: self, values }
    }

    /// `∂^a` along one axis by multiplying lane spectra with `(ik)^a`.
    fn spectral(&self, arr: &ArrayD<f64>, axis: usize, a: usize) -> ArrayD<f64> {
        let k = &self.wavenumbers[axis];
        let len = k.len();
        let nyq = len / 2;
        let norm = 1.0 / len as f64;
        let factor: Vec<C64> = k
            .iter()
            .enumerate()
            .map(
                |(j, &kk)| {
                    if a % 2 == 1 && j == nyq {
                        C64::new(0.0, 0.0)
                    } else {
                        C64::new(0.0, kk).powu(a as u32) * norm
                    }
                },
            )
            .collect();
        map_lanes(arr, axis, len, |src, dst| {
            let mut buf: Vec<C64> = src.iter().map(|&v| C64::new(v, 0.0)).collect();
            self.fft.process(&mut buf, false);
            buf.iter_mut().zip(&factor).for_each(|(v, f)| *v *= f);
            self.fft.process(&mut buf, true);
            dst.iter_mut().zip(&buf).for_each(|(d, v)| *d = v.re);
        })
    }

    fn fd4(&self, arr: &ArrayD<f64>, axis: usize) -> ArrayD<f64> {
        let scale = 1.0 / (12.0 * self.spacing[axis]);
        let len = arr.shape()[axis];
        map_lanes(arr, axis, len, |src, dst| {
            for j in 0..len {
                let at = |o: isize| src[(j as isize + o).rem_euclid(len as isize) as usize];
                dst[j] = (-at(2) + 8.0 * at(1) - 8.0 * at(-1) + at(-2)) * scale;
            }
        })
    }
}

impl Prepared<'_> {
    /// `∂^α` of the prepared field; odd spectral orders drop the Nyquist mode.
    pub fn derivative(&self, alpha: &[usize]) -> ArrayD<f64> {
        let mut out: Option<ArrayD<f64>> = None;
        for (ax, &a) in alpha.iter().enumerate() {
            if a == 0 {
                continue;
            }
            let src = out.as_ref().unwrap_or(self.values);
            let next = match self.diff.scheme {
                DerivativeScheme::Spectral => self.diff.spectral(src, ax, a),
                DerivativeScheme::FiniteDifference4th => {
                    let mut cur = self.diff.fd4(src, ax);
                    for _ in 1..a {
                        cur = self.diff.fd4(&cur, ax);
                    }
                    cur
                }
            };
            out = Some(next);
        }
        out.unwrap_or_else(|| self.values.clone())
    }
}

/// `∂^β H` on the lattice, `None` when it vanishes identically.
fn symbol_derivative(
    h: &HamiltonianSymbol,
    spec: &PhaseSpaceSpec,
    beta: &[usize],
    diff: &Differentiator,
) -> Option<ArrayD<f64>> {
    let d = spec.d();
    let monos = h.polynomial_derivative(&beta[..d], &beta[d..]);
    let mut out = if monos.is_empty() {
        None
    } else {
        Some(sample_lattice(spec, |q, p| monos.iter().map(|m| m.eval(q, p)).sum()))
    };
    if let Some(s) = h.sampled() {
        let ds = diff.prepare(&s.values).derivative(beta);
        out = Some(match out {
            Some(o) => o + ds,
            None => ds,
        });
    }
    out
}

/// Coefficient field multiplying `∂^α` of the evolved field.
#[derive(Clone, Debug)]
struct Term {
    alpha: Vec<usize>,
    coeff: ArrayD<f64>,
}

fn apply_terms(diff: &Differentiator, values: &ArrayD<f64>, terms: &[Term]) -> ArrayD<f64> {
    let prepared = diff.prepare(values);
    let mut acc = ArrayD::zeros(values.raw_dim());
    for t in terms {
        let dv = prepared.derivative(&t.alpha);
        Zip::from(&mut acc).and(&dv).and(&t.coeff).par_for_each(|a, &x, &c| *a += x * c);
    }
    acc
}

/// Wick polynomial of the Gaussian derivative along coordinate directions `idx`,
/// given `ax = B⁻¹x` and the precision matrix.
fn wick_coordinates(precision: &ndarray::Array2<f64>, ax: &[f64], idx: &[usize]) -> f64 {
    match idx.split_first() {
        None => 1.0,
        Some((&h0, rest)) => {
            let mut acc = -ax[h0] * wick_coordinates(precision, ax, rest);
            for j in 0..rest.len() {
                let c = precision[[h0, rest[j]]];
                if c != 0.0 {
                    let mut sub = rest.to_vec();
                    sub.remove(j);
                    acc -= c * wick_coordinates(precision, ax, &sub);
                }
            }
            acc
        }
    }
}

fn wick_general(precision: &ndarray::Array2<f64>, ax: &[f64], dirs: &[&[f64]]) -> f64 {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let apply = |h: &[f64]| -> Vec<f64> {
        (0..h.len()).map(|i| (0..h.len()).map(|j| precision[[i, j]] * h[j]).sum()).collect()
    };
    match dirs.split_first() {
        None => 1.0,
        Some((h0, rest)) => {
            let ah0 = apply(h0);
            let mut acc = -dot(ax, h0) * wick_general(precision, ax, rest);
            for j in 0..rest.len() {
                let c = dot(&ah0, rest[j]);
                if c != 0.0 {
                    let mut sub = rest.to_vec();
                    sub.remove(j);
                    acc -= c * wick_general(precision, ax, &sub);
                }
            }
            acc
        }
    }
}

/// `k`-th directional derivative `μ^{(k)}(x) h₁…h_k` of a Gaussian density, as density × Wick polynomial.
pub fn gaussian_measure_derivative(measure: &GaussianMeasure, directions: &[Vec<f64>], point: &[f64]) -> Result<f64> {
    if directions.len() > MAX_WICK_ORDER {
        return Err(Error::OrderOverflow { order: directions.len(), max: MAX_WICK_ORDER });
    }
    if point.len() != measure.dim || directions.iter().any(|h| h.len() != measure.dim) {
        return Err(Error::SpecMismatch(format!("directions and point must have dimension {}", measure.dim)));
    }
    let ax = measure.precision_apply(point);
    let dirs: Vec<&[f64]> = directions.iter().map(Vec::as_slice).collect();
    Ok(measure.density(point) * wick_general(&measure.precision, &ax, &dirs))
}

/// `{Ψ, H}^{(n)}` on the lattice.
pub fn poisson_power(
    psi: &PhaseSpaceField,
    h: &HamiltonianSymbol,
    n: usize,
    scheme: DerivativeScheme,
) -> Result<PhaseSpaceField> {
    let max = 2 * MAX_TRUNCATION - 1;
    if n == 0 || n > max {
        return Err(Error::OrderOverflow { order: n, max });
    }
    let spec = psi.spec();
    if h.dof() != spec.d() {
        return Err(Error::GridMismatch(format!("symbol has {} degrees of freedom, lattice {}", h.dof(), spec.d())));
    }
    let d = spec.d();
    let diff = Differentiator::new(spec, scheme);
    let prepared = diff.prepare(&psi.values);
    let mut acc = ArrayD::zeros(psi.values.raw_dim());
    for alpha in multi_indices(2 * d, n) {
        let Some(dh) = symbol_derivative(h, spec, &swap_halves(&alpha), &diff) else {
            continue;
        };
        let p_order: usize = alpha[d..].iter().sum();
        let sign = if p_order.is_multiple_of(2) { 1.0 } else { -1.0 };
        let w = sign * factorial(n) / alpha.iter().map(|&a| factorial(a)).product::<f64>();
        let dpsi = prepared.derivative(&alpha);
        Zip::from(&mut acc).and(&dpsi).and(&dh).par_for_each(|a, &x, &y| *a += w * x * y);
    }
    Ok(psi.with_values(acc))
}

/// Truncated sine-series generator for one static symbol on one lattice.
pub struct MoyalGenerator {
    source: HamiltonianSymbol,
    segment: Option<usize>,
    symbol: HamiltonianSymbol,
    truncation: usize,
    spec: Arc<PhaseSpaceSpec>,
    diff: Differentiator,
    tensors: HashMap<Vec<usize>, ArrayD<f64>>,
    terms: Vec<Term>,
    eta_terms: OnceLock<Vec<Term>>,
    energy: ArrayD<f64>,
}

impl MoyalGenerator {
    /// Generator for the symbol in force at `t = 0`.
    pub fn new(
        h: &HamiltonianSymbol,
        truncation: usize,
        scheme: DerivativeScheme,
        spec: Arc<PhaseSpaceSpec>,
    ) -> Result<Self> {
        Self::at_time(h, truncation, scheme, spec, 0.0)
    }

    /// Liouville generator, the series cut after the Poisson bracket.
    pub fn classical(h: &HamiltonianSymbol, spec: Arc<PhaseSpaceSpec>) -> Result<Self> {
        Self::new(h, 1, DerivativeScheme::Spectral, spec)
    }

    fn at_time(
        h: &HamiltonianSymbol,
        truncation: usize,
        scheme: DerivativeScheme,
        spec: Arc<PhaseSpaceSpec>,
        t: f64,
    ) -> Result<Self> {
        if truncation == 0 || truncation > MAX_TRUNCATION {
            return Err(Error::OrderOverflow { order: 2 * truncation.max(1) - 1, max: 2 * MAX_TRUNCATION - 1 });
        }
        if h.dof() != spec.d() {
            return Err(Error::GridMismatch(format!(
                "symbol has {} degrees of freedom, lattice {}",
                h.dof(),
                spec.d()
            )));
        }
        if let Some(s) = h.sampled() {
            if s.spec().params() != spec.params() {
                return Err(Error::GridMismatch("sampled symbol lives on a different lattice".into()));
            }
        }
        let symbol = h.at(t);
        let d = spec.d();
        let diff = Differentiator::new(&spec, scheme);
        let mut tensors = HashMap::new();
        let mut terms = Vec::new();
        for k in 1..=truncation {
            let m = 2 * k - 1;
            let outer = 2.0 * if k % 2 == 0 { 1.0 } else { -1.0 } * 0.5f64.powi(m as i32);
            for alpha in multi_indices(2 * d, m) {
                let beta = swap_halves(&alpha);
                let Some(dh) = symbol_derivative(&symbol, &spec, &beta, &diff) else {
                    continue;
                };
                let p_order: usize = alpha[d..].iter().sum();
                let sign = if p_order.is_multiple_of(2) { 1.0 } else { -1.0 };
                let w = outer * sign / alpha.iter().map(|&a| factorial(a)).product::<f64>();
                terms.push(Term { alpha: alpha.clone(), coeff: dh.mapv(|v| w * v) });
                tensors.insert(beta, dh);
            }
        }
        let energy = sample_lattice(&spec, |q, p| symbol.eval_polynomial(q, p));
        let energy = match symbol.sampled() {
            Some(s) => energy + &s.values,
            None => energy,
        };
        Ok(Self {
            source: h.clone(),
            segment: h.segment_at(t),
            symbol,
            truncation,
            spec,
            diff,
            tensors,
            terms,
            eta_terms: OnceLock::new(),
            energy,
        })
    }

    /// The generator in force at time `t`, rebuilt only when the schedule segment changes.
    pub fn refreshed(&self, t: f64) -> Result<Option<Self>> {
        if self.source.segment_at(t) == self.segment {
            return Ok(None);
        }
        Self::at_time(&self.source, self.truncation, self.diff.scheme(), self.spec.clone(), t).map(Some)
    }

    pub fn truncation(&self) -> usize {
        self.truncation
    }

    pub fn scheme(&self) -> DerivativeScheme {
        self.diff.scheme()
    }

    pub fn spec(&self) -> &Arc<PhaseSpaceSpec> {
        &self.spec
    }

    /// The static symbol the generator was built from.
    pub fn symbol(&self) -> &HamiltonianSymbol {
        &self.symbol
    }

    /// `∂^β H` on the lattice, zero for every `β` the symbol does not reach.
    pub fn derivative_tensor(&self, beta: &[usize]) -> ArrayD<f64> {
        if let Some(t) = self.tensors.get(beta) {
            return t.clone();
        }
        symbol_derivative(&self.symbol, &self.spec, beta, &self.diff)
            .unwrap_or_else(|| ArrayD::zeros(self.energy.raw_dim()))
    }

    /// Number of nonzero derivative contractions in the series.
    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    /// Symbol values on the lattice.
    pub fn energy_density(&self) -> &ArrayD<f64> {
        &self.energy
    }

    /// Stability bound `min spacing / (4 max|∇H|)` over the lattice.
    pub fn cfl_limit(&self) -> f64 {
        let d = self.spec.d();
        let ax = self.spec.axis();
        let spacing = (0.5 * ax.step()).min(ax.lattice_momentum_step());
        let mut sq = ArrayD::<f64>::zeros(self.energy.raw_dim());
        for i in 0..2 * d {
            let mut beta = vec![0; 2 * d];
            beta[i] = 1;
            if let Some(g) = self.tensors.get(&beta) {
                sq.zip_mut_with(g, |s, v| *s += v * v);
            } else if let Some(dh) = symbol_derivative(&self.symbol, &self.spec, &beta, &self.diff) {
                sq.zip_mut_with(&dh, |s, v| *s += v * v);
            }
        }
        let max = sq.iter().cloned().fold(0.0, f64::max).sqrt();
        if max == 0.0 {
            f64::INFINITY
        } else {
            spacing / (4.0 * max)
        }
    }

    /// Right-hand side on raw Wigner-density values.
    pub fn apply_density(&self, values: &ArrayD<f64>) -> ArrayD<f64> {
        apply_terms(&self.diff, values, &self.terms)
    }

    /// Right-hand side on raw η-density values, with the reference density
    /// differentiated analytically by the Leibniz rule.
    pub fn apply_eta(&self, values: &ArrayD<f64>) -> ArrayD<f64> {
        apply_terms(&self.diff, values, self.eta_terms.get_or_init(|| self.build_eta_terms()))
    }

    fn build_eta_terms(&self) -> Vec<Term> {
        let spec = &self.spec;
        let precision = spec.eta.precision.clone();
        let mut wick: HashMap<Vec<usize>, ArrayD<f64>> = HashMap::new();
        let mut acc: HashMap<Vec<usize>, ArrayD<f64>> = HashMap::new();
        let mut order: Vec<Vec<usize>> = Vec::new();
        for term in &self.terms {
            for beta in sub_indices(&term.alpha) {
                let gamma: Vec<usize> = term.alpha.iter().zip(&beta).map(|(a, b)| a - b).collect();
                let poly = wick.entry(gamma.clone()).or_insert_with(|| {
                    let idx: Vec<usize> =
                        gamma.iter().enumerate().flat_map(|(i, &g)| std::iter::repeat_n(i, g)).collect();
                    sample_lattice(spec, |q, p| {
                        let mut x = q.to_vec();
                        x.extend_from_slice(p);
                        let ax = spec.eta.precision_apply(&x);
                        wick_coordinates(&precision, &ax, &idx)
                    })
                });
                let c: f64 = term.alpha.iter().zip(&beta).map(|(&a, &b)| binomial(a, b)).product();
                let slot = acc.entry(beta.clone()).or_insert_with(|| {
                    order.push(beta.clone());
                    ArrayD::zeros(term.coeff.raw_dim())
                });
                Zip::from(slot).and(&term.coeff).and(&*poly).par_for_each(|s, &k, &w| *s += c * k * w);
            }
        }
        order
            .into_iter()
            .map(|beta| {
                let coeff = acc.remove(&beta).expect("accumulated");
                Term { alpha: beta, coeff }
            })
            .collect()
    }
}

/// All `β ≤ α` componentwise.
fn sub_indices(alpha: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::with_capacity(alpha.len())];
    for &a in alpha {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..=a).map(move |b| {
                    let mut v = prefix.clone();
                    v.push(b);
                    v
                })
            })
            .collect();
    }
    out
}

fn check_lattice(field: &PhaseSpaceField, gen: &MoyalGenerator) -> Result<()> {
    if field.spec().params() != gen.spec.params() {
        return Err(Error::GridMismatch("field and generator live on different lattices".into()));
    }
    Ok(())
}

/// `Σ_{k≤K} 2(-1)^k (1/2)^{2k-1}/(2k-1)! {W, H}^{(2k-1)}`.
pub fn moyal_rhs(w: &PhaseSpaceField, gen: &MoyalGenerator) -> Result<PhaseSpaceField> {
    check_lattice(w, gen)?;
    if w.role == FieldRole::EtaDensity {
        return Err(Error::GridMismatch("η-densities evolve through eta_rhs".into()));
    }
    Ok(w.with_values(gen.apply_density(&w.values)))
}

/// The same series acting on `Φ` through `Φ·(μ⊗ν)`, returned as an η-density.
pub fn eta_rhs(phi: &PhaseSpaceField, gen: &MoyalGenerator) -> Result<PhaseSpaceField> {
    check_lattice(phi, gen)?;
    if phi.role != FieldRole::EtaDensity {
        return Err(Error::GridMismatch(format!("expected an η-density, got {:?}", phi.role)));
    }
    Ok(phi.with_values(gen.apply_eta(&phi.values)))
}

/// Fixed-step run parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolutionRun {
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "default_stride")]
    pub stride: usize,
    /// Run even when `dt` exceeds the stability guard (a warning is recorded).
    #[serde(default)]
    pub cfl_override: bool,
}

fn default_stride() -> usize {
    1
}

impl EvolutionRun {
    pub fn new(dt: f64, t_end: f64, stride: usize) -> Self {
        Self { dt, t_end, stride, cfl_override: false }
    }

    pub fn with_cfl_override(mut self) -> Self {
        self.cfl_override = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidRun(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidRun(format!("t_end must be non-negative, got {}", self.t_end)));
        }
        if self.stride == 0 {
            return Err(Error::InvalidRun("stride must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of steps; `dt` is shrunk so that they land exactly on `t_end`.
    pub fn steps(&self) -> usize {
        (self.t_end / self.dt - 1e-9).ceil().max(0.0) as usize
    }

    pub fn effective_dt(&self) -> f64 {
        let n = self.steps();
        if n == 0 {
            0.0
        } else {
            self.t_end / n as f64
        }
    }

    /// Step indices that produce snapshots: every `stride`-th step and the last.
    pub fn snapshot_steps(&self) -> Vec<usize> {
        let n = self.steps();
        let mut out: Vec<usize> = (0..=n).step_by(self.stride.max(1)).collect();
        if out.last() != Some(&n) {
            out.push(n);
        }
        out
    }

    pub fn snapshot_times(&self) -> Vec<f64> {
        let dt = self.effective_dt();
        self.snapshot_steps().into_iter().map(|k| k as f64 * dt).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRow {
    pub t: f64,
    pub mass: f64,
    pub l2: f64,
    pub energy: f64,
    pub min_w: f64,
    pub purity_est: f64,
}

#[derive(Clone, Debug)]
pub struct Snapshot {
    pub step: usize,
    pub t: f64,
    pub field: PhaseSpaceField,
}

#[derive(Clone, Debug)]
pub struct Evolution {
    pub snapshots: Vec<Snapshot>,
    pub diagnostics: Vec<DiagnosticsRow>,
    pub dt: f64,
    pub warnings: Vec<String>,
}

impl Evolution {
    pub fn last(&self) -> &Snapshot {
        self.snapshots.last().expect("at least the initial snapshot")
    }
}

struct Monitor {
    eta: Option<ArrayD<f64>>,
    cell: f64,
    d: usize,
    last: usize,
}

impl Monitor {
    fn wigner(&self, values: &ArrayD<f64>) -> ArrayD<f64> {
        match &self.eta {
            Some(e) => values * e,
            None => values.clone(),
        }
    }

    fn row(&self, t: f64, values: &ArrayD<f64>, energy: &ArrayD<f64>) -> (DiagnosticsRow, f64) {
        let w = self.wigner(values);
        let mut mass = 0.0;
        let mut sq = 0.0;
        let mut en = 0.0;
        let mut min = f64::INFINITY;
        let mut boundary = 0.0;
        for ((ix, &v), &h) in w.indexed_iter().zip(energy.iter()) {
            mass += v;
            sq += v * v;
            en += h * v;
            min = min.min(v);
            if ix.slice().iter().any(|&k| k == 0 || k == self.last) {
                boundary += v.abs();
            }
        }
        let row = DiagnosticsRow {
            t,
            mass: mass * self.cell,
            l2: (sq * self.cell).sqrt(),
            energy: en * self.cell,
            min_w: min,
            purity_est: (2.0 * PI).powi(self.d as i32) * sq * self.cell,
        };
        (row, boundary * self.cell)
    }
}

/// Classical RK4 integration of a Wigner density or an η-density.
pub fn evolve(initial: &PhaseSpaceField, gen: &MoyalGenerator, run: &EvolutionRun) -> Result<Evolution> {
    run.validate()?;
    check_lattice(initial, gen)?;
    let eta_route = match initial.role {
        FieldRole::EtaDensity => true,
        FieldRole::WignerMeasureDensity => false,
        other => return Err(Error::GridMismatch(format!("cannot evolve a {other:?} field"))),
    };
    let spec = gen.spec.clone();
    let mut warnings = Vec::new();
    let dt = run.effective_dt();
    let limit = gen.cfl_limit();
    if dt > limit {
        if run.cfl_override {
            let msg = format!("dt = {dt:.3e} exceeds the stability guard {limit:.3e}; continuing on override");
            log::warn!("{msg}");
            warnings.push(msg);
        } else {
            return Err(Error::CflViolation { dt, limit });
        }
    }
    let monitor = Monitor {
        eta: eta_route.then(|| eta_on_lattice(&spec)),
        cell: spec.grid.phase_cell(),
        d: spec.d(),
        last: 2 * spec.n() - 1,
    };
    let rhs = |g: &MoyalGenerator, v: &ArrayD<f64>| if eta_route { g.apply_eta(v) } else { g.apply_density(v) };

    let steps = run.steps();
    let wanted = run.snapshot_steps();
    let mut next_snap = 0;
    let mut snapshots = Vec::with_capacity(wanted.len());
    let mut diagnostics = Vec::with_capacity(steps + 1);
    let mut owned: Option<MoyalGenerator> = None;
    let mut values = initial.values.clone();

    let (row, boundary) = monitor.row(0.0, &values, &gen.energy);
    if boundary > BOUNDARY_LIMIT {
        return Err(Error::BoundaryEscape { time: 0.0, mass: boundary });
    }
    let mass0 = row.mass;
    let mut prev_mass = row.mass;
    diagnostics.push(row);
    if wanted[0] == 0 {
        snapshots.push(Snapshot { step: 0, t: 0.0, field: initial.clone() });
        next_snap = 1;
    }

    for step in 0..steps {
        let t = step as f64 * dt;
        let current = owned.as_ref().unwrap_or(gen);
        if let Some(g) = current.refreshed(t)? {
            log::debug!("schedule segment change at t = {t}");
            owned = Some(g);
        }
        let g = owned.as_ref().unwrap_or(gen);
        let k1 = rhs(g, &values);
        let k2 = rhs(g, &(&values + &(&k1 * (0.5 * dt))));
        let k3 = rhs(g, &(&values + &(&k2 * (0.5 * dt))));
        let k4 = rhs(g, &(&values + &(&k3 * dt)));
        Zip::from(&mut values)
            .and(&k1)
            .and(&k2)
            .and(&k3)
            .and(&k4)
            .par_for_each(|v, &a, &b, &c, &d| *v += dt / 6.0 * (a + 2.0 * b + 2.0 * c + d));

        let t1 = (step + 1) as f64 * dt;
        let (row, boundary) = monitor.row(t1, &values, &g.energy);
        let drift = (row.mass - prev_mass).abs();
        if !row.mass.is_finite() || drift > STEP_MASS_LIMIT {
            return Err(Error::UnstableStep { time: t1, drift });
        }
        if boundary > BOUNDARY_LIMIT {
            return Err(Error::BoundaryEscape { time: t1, mass: boundary });
        }
        prev_mass = row.mass;
        diagnostics.push(row);
        if next_snap < wanted.len() && wanted[next_snap] == step + 1 {
            snapshots.push(Snapshot { step: step + 1, t: t1, field: initial.with_values(values.clone()) });
            next_snap += 1;
        }
    }
    let total = (prev_mass - mass0).abs();
    if total > RUN_MASS_LIMIT {
        let msg = format!("total mass drift {total:.3e} exceeds {RUN_MASS_LIMIT:.0e}");
        log::warn!("{msg}");
        warnings.push(msg);
    }
    Ok(Evolution { snapshots, diagnostics, dt, warnings })
}

/// `T(t) = e^{-iĤt} T₀ e^{iĤt}` at each requested time.
pub fn von_neumann_oracle(
    t0: &DensityOperator,
    h: &ndarray::Array2<C64>,
    times: &[f64],
) -> Result<Vec<DensityOperator>> {
    if h.dim() != t0.matrix().dim() {
        return Err(Error::SpecMismatch(format!("Hamiltonian is {:?}, state is {:?}", h.dim(), t0.matrix().dim())));
    }
    let dev = linalg::hermitian_deviation(h);
    if dev > t0.system().policy().hermitian {
        return Err(Error::NotHermitian { deviation: dev });
    }
    if times.iter().all(|&t| t == 0.0) {
        return Ok(vec![t0.clone(); times.len()]);
    }
    let (e, v) = linalg::eigh(h)?;
    let vd = linalg::dagger(&v);
    let a = vd.dot(t0.matrix()).dot(&v);
    Ok(times
        .iter()
        .map(|&t| {
            if t == 0.0 {
                return t0.clone();
            }
            let mut b = a.clone();
            for ((i, j), x) in b.indexed_iter_mut() {
                *x *= C64::from_polar(1.0, -(e[i] - e[j]) * t);
            }
            let m = linalg::symmetrize(&v.dot(&b).dot(&vd));
            DensityOperator::trusted(m, t0.rep(), t0.system().clone())
        })
        .collect())
}

/// Oracle for a symbol with a piecewise-constant schedule; `times` must be ascending.
pub fn oracle_for_symbol(t0: &DensityOperator, h: &HamiltonianSymbol, times: &[f64]) -> Result<Vec<DensityOperator>> {
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidRun("oracle times must be ascending".into()));
    }
    let system = t0.system().clone();
    if !h.is_time_dependent() {
        return von_neumann_oracle(t0, &weyl_quantize(h, &system)?, times);
    }
    let starts: Vec<f64> = h.schedule().iter().map(|s| s.start).filter(|&s| s > 0.0).collect();
    let mut ops: HashMap<Option<usize>, ndarray::Array2<C64>> = HashMap::new();
    let mut state = t0.clone();
    let mut now = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for &target in times {
        while now < target {
            let next = starts.iter().cloned().find(|&s| s > now).unwrap_or(f64::INFINITY).min(target);
            let seg = h.segment_at(now);
            if let Entry::Vacant(e) = ops.entry(seg) {
                e.insert(weyl_quantize(&h.at(now), &system)?);
            }
            state = von_neumann_oracle(&state, &ops[&seg], &[next - now])?.remove(0);
            now = next;
        }
        out.push(state.clone());
    }
    Ok(out)
}
