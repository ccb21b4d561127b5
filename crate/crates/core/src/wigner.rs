//! Wigner transforms on the phase lattice.
//!
//! Every map works axis by axis on the `(i_t, l_t)` index pair of an operator
//! (or the `(a_t, m_t)` pair of a field), so a `d`-mode transform is `d`
//! successive 2-d transforms. Kernel values at `q ± r/2` come from the
//! band-limited interpolation of the operator onto the half-step grid.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{Array2, ArrayD, ArrayView2, IxDyn};
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::field::{eta_on_lattice, lattice_shape, DualField, FieldRole, PhaseSpaceField, ReferenceMeasure};
use crate::fourier::{interpolation_matrix, map_axis_pair, C64};
use crate::hilbert::{CompositeSystem, DensityOperator, Representation};
use crate::lattice::PhaseSpaceSpec;
use crate::symbol::HamiltonianSymbol;

fn sign(k: i64) -> f64 {
    if k.rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

struct AxisKit {
    n: usize,
    f: Array2<C64>,
    ft: Array2<C64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl AxisKit {
    fn new(n: usize) -> Self {
        let f = interpolation_matrix(n).mapv(|v| C64::new(v, 0.0));
        let ft = f.t().to_owned();
        let mut planner = FftPlanner::new();
        Self { n, f, ft, fwd: planner.plan_fft_forward(2 * n), inv: planner.plan_fft_inverse(2 * n) }
    }

    /// `F S Fᵀ` on the half-step grid.
    fn lift(&self, src: &[C64]) -> Array2<C64> {
        let s = ArrayView2::from_shape((self.n, self.n), src).expect("slice shape");
        self.f.dot(&s).dot(&self.ft)
    }

    /// Operator slice `(i, l)` to Wigner slice `(a, m)`.
    fn forward(&self, src: &[C64], dst: &mut [C64]) {
        let n = self.n as i64;
        let m2 = 2 * self.n;
        let st = self.lift(src);
        let mut buf = vec![C64::new(0.0, 0.0); m2];
        for a in 0..2 * n {
            buf.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
            let reach = a.min(2 * n - 1 - a).min(n - 1);
            for k in -reach..=reach {
                buf[k.rem_euclid(2 * n) as usize] = st[[(a - k) as usize, (a + k) as usize]] * sign(k);
            }
            self.inv.process(&mut buf);
            let row = &mut dst[a as usize * m2..(a as usize + 1) * m2];
            for (o, v) in row.iter_mut().zip(&buf) {
                *o = v / (2.0 * PI);
            }
        }
    }

    /// Wigner slice `(a, m)` back to operator slice `(i, l)`; exact left inverse of `forward`.
    fn inverse(&self, src: &[C64], dst: &mut [C64]) {
        let n = self.n;
        let m2 = 2 * n;
        let scale = 2.0 * PI / m2 as f64;
        let mut buf = vec![C64::new(0.0, 0.0); m2];
        for a in 0..m2 - 1 {
            buf.copy_from_slice(&src[a * m2..(a + 1) * m2]);
            self.fwd.process(&mut buf);
            let lo = a.saturating_sub(n - 1);
            let hi = a.min(n - 1);
            for i in lo..=hi {
                let l = a - i;
                let k = l as i64 - i as i64;
                dst[i * n + l] = buf[k.rem_euclid(m2 as i64) as usize] * (scale * sign(k));
            }
        }
    }

    /// Adjoint of `forward`: coefficients `C[i, l]` with `Σ G·W = Σ S[i,l] C[i,l]`.
    fn adjoint(&self, src: &[C64], dst: &mut [C64]) {
        let n = self.n as i64;
        let m2 = 2 * self.n;
        let mut gamma = Array2::<C64>::zeros((m2, m2));
        let mut buf = vec![C64::new(0.0, 0.0); m2];
        for a in 0..m2 {
            buf.copy_from_slice(&src[a * m2..(a + 1) * m2]);
            self.inv.process(&mut buf);
            for (kk, v) in buf.iter().enumerate() {
                let k = if kk < self.n { kk as i64 } else { kk as i64 - 2 * n };
                gamma[[a, kk]] = v * (sign(k) / (2.0 * PI));
            }
        }
        let mut z = Array2::<C64>::zeros((m2, m2));
        for b in 0..m2 as i64 {
            for c in 0..m2 as i64 {
                if (b + c) % 2 == 0 {
                    let k = (c - b) / 2;
                    z[[b as usize, c as usize]] = gamma[[((b + c) / 2) as usize, k.rem_euclid(2 * n) as usize]];
                }
            }
        }
        let c = self.ft.dot(&z).dot(&self.f);
        dst.copy_from_slice(c.as_slice().expect("standard layout"));
    }

    /// Operator slice `(i, l)` to Weyl-function samples `(k, j)` on the dual lattice.
    fn weyl_samples(&self, src: &[C64], dst: &mut [C64]) {
        let n = self.n as i64;
        let m2 = 2 * self.n;
        let st = self.lift(src).mapv(|v| v * 0.5);
        let mut buf = vec![C64::new(0.0, 0.0); m2];
        for k in 0..2 * n {
            let s = 2 * (k - n);
            for c in 0..2 * n {
                buf[c as usize] = if c + s >= 0 && c + s < 2 * n {
                    st[[c as usize, (c + s) as usize]] * sign(c)
                } else {
                    C64::new(0.0, 0.0)
                };
            }
            self.fwd.process(&mut buf);
            for j in 0..2 * n {
                let ph = C64::from_polar(sign(j - n), -PI * ((j - n) * (k - n)) as f64 / n as f64);
                dst[k as usize * m2 + j as usize] = buf[j as usize] * ph;
            }
        }
    }

    /// `(a, m) ↦ (k, j)`: `cell · Σ f(a,m) e^{-i(p2_j y_a + q2_k p_m)}`.
    fn symplectic(&self, src: &[C64], dst: &mut [C64], cell: f64) {
        let n = self.n as i64;
        let m2 = 2 * self.n;
        let mut x: Vec<C64> = src.to_vec();
        for a in 0..m2 {
            for m in 0..m2 {
                x[a * m2 + m] *= sign((a + m) as i64);
            }
        }
        self.fft2(&mut x, false);
        for j in 0..2 * n {
            for k in 0..2 * n {
                dst[k as usize * m2 + j as usize] =
                    x[j as usize * m2 + k as usize] * (cell * sign(j - n) * sign(k + n));
            }
        }
    }

    fn inverse_symplectic(&self, src: &[C64], dst: &mut [C64], cell: f64) {
        let n = self.n as i64;
        let m2 = 2 * self.n;
        let mut y = vec![C64::new(0.0, 0.0); m2 * m2];
        for j in 0..2 * n {
            for k in 0..2 * n {
                y[j as usize * m2 + k as usize] =
                    src[k as usize * m2 + j as usize] * (sign(j - n) * sign(k + n) / cell);
            }
        }
        self.fft2(&mut y, true);
        let norm = 1.0 / (m2 * m2) as f64;
        for a in 0..m2 {
            for m in 0..m2 {
                dst[a * m2 + m] = y[a * m2 + m] * (norm * sign((a + m) as i64));
            }
        }
    }

    fn fft2(&self, x: &mut [C64], inverse: bool) {
        let m2 = 2 * self.n;
        let plan = if inverse { &self.inv } else { &self.fwd };
        for row in x.chunks_mut(m2) {
            plan.process(row);
        }
        let mut col = vec![C64::new(0.0, 0.0); m2];
        for c in 0..m2 {
            for r in 0..m2 {
                col[r] = x[r * m2 + c];
            }
            plan.process(&mut col);
            for r in 0..m2 {
                x[r * m2 + c] = col[r];
            }
        }
    }
}

fn operator_tensor(m: &Array2<C64>, spec: &PhaseSpaceSpec) -> ArrayD<C64> {
    let shape = vec![spec.n(); 2 * spec.d()];
    m.as_standard_layout().into_owned().into_shape_with_order(IxDyn(&shape)).expect("operator shape")
}

fn tensor_operator(t: ArrayD<C64>, spec: &PhaseSpaceSpec) -> Array2<C64> {
    let dim = spec.dim();
    t.as_standard_layout().into_owned().into_shape_with_order((dim, dim)).expect("square")
}

fn per_axis(arr: ArrayD<C64>, d: usize, out: (usize, usize), f: impl Fn(&[C64], &mut [C64]) + Sync) -> ArrayD<C64> {
    let mut arr = arr;
    for t in 0..d {
        arr = map_axis_pair(&arr, t, d + t, out, &f);
    }
    arr
}

fn real_part(arr: &ArrayD<C64>) -> ArrayD<f64> {
    arr.mapv(|v| v.re)
}

fn imag_residue(arr: &ArrayD<C64>) -> f64 {
    arr.iter().fold(0.0, |m, v| m.max(v.im.abs()))
}

/// Wigner density `W(q,p) = (2π)^{-d} ∫ ρ(q - r/2, q + r/2) e^{i⟨r,p⟩} dr` on the phase lattice.
pub fn wigner_from_density(t: &DensityOperator) -> Result<PhaseSpaceField> {
    let spec = t.system().require_phase_space()?.clone();
    let kit = AxisKit::new(spec.n());
    let m2 = 2 * spec.n();
    let arr = per_axis(operator_tensor(t.matrix(), &spec), spec.d(), (m2, m2), |s, d| kit.forward(s, d));
    PhaseSpaceField::new(real_part(&arr), FieldRole::WignerMeasureDensity, ReferenceMeasure::Lebesgue, spec)
}

/// Weyl function `tr(T𝒲(q2, p2))` on the dual lattice, computed by the shift-sum formula.
pub fn weyl_function_samples(t: &DensityOperator) -> Result<DualField> {
    let spec = t.system().require_phase_space()?.clone();
    let kit = AxisKit::new(spec.n());
    let m2 = 2 * spec.n();
    let arr = per_axis(operator_tensor(t.matrix(), &spec), spec.d(), (m2, m2), |s, d| kit.weyl_samples(s, d));
    DualField::new(arr, spec)
}

/// `f̂(q2, p2) = ∫ f(q, p) e^{-i(⟨p2, q⟩ + ⟨q2, p⟩)} dq dp` on the dual lattice.
pub fn symplectic_fourier(field: &PhaseSpaceField) -> DualField {
    let spec = field.spec().clone();
    let kit = AxisKit::new(spec.n());
    let m2 = 2 * spec.n();
    let cell = spec.axis().lattice_cell();
    let arr = per_axis(field.values.mapv(|v| C64::new(v, 0.0)), spec.d(), (m2, m2), |s, d| kit.symplectic(s, d, cell));
    DualField::new(arr, spec).expect("lattice shape")
}

/// Exact inverse of [`symplectic_fourier`], complex valued.
pub fn inverse_symplectic_fourier(dual: &DualField) -> ArrayD<C64> {
    let spec = dual.spec().clone();
    let kit = AxisKit::new(spec.n());
    let m2 = 2 * spec.n();
    let cell = spec.axis().lattice_cell();
    per_axis(dual.values.clone(), spec.d(), (m2, m2), |s, d| kit.inverse_symplectic(s, d, cell))
}

/// Wigner density as the inverse symplectic Fourier transform of the Weyl function.
pub fn wigner_from_weyl_function(samples: &DualField, target: &PhaseSpaceSpec) -> Result<PhaseSpaceField> {
    if samples.spec().params() != target.params() {
        return Err(Error::GridMismatch("Weyl-function samples live on a different dual lattice".into()));
    }
    let w = inverse_symplectic_fourier(samples);
    let scale = samples.values.iter().fold(0.0f64, |m, v| m.max(v.norm())).max(1e-300);
    let residue = imag_residue(&w);
    if residue > 1e-8 * scale {
        log::warn!("Weyl-function samples are not conjugate symmetric (imaginary residue {residue:.3e})");
    }
    PhaseSpaceField::new(
        real_part(&w),
        FieldRole::WignerMeasureDensity,
        ReferenceMeasure::Lebesgue,
        samples.spec().clone(),
    )
}

/// Density operator whose Wigner density is `w`, on the single-factor system of its lattice.
pub fn inverse_wigner(w: &PhaseSpaceField) -> Result<DensityOperator> {
    inverse_wigner_on(w, &CompositeSystem::single(w.spec().clone()))
}

/// Inverse Wigner map onto a (possibly composite) system whose joint phase grid is `w`'s lattice.
///
/// The output is Hermitian with unit trace; positivity is not enforced, so a
/// non-physical `w` yields a negative eigenvalue visible via `min_eigenvalue`.
pub fn inverse_wigner_on(w: &PhaseSpaceField, system: &Arc<CompositeSystem>) -> Result<DensityOperator> {
    let spec = system.require_phase_space()?;
    if spec.params() != w.spec().params() {
        return Err(Error::GridMismatch("field and system use different lattices".into()));
    }
    let mass = w.integral();
    if (mass - 1.0).abs() > 1e-6 {
        return Err(Error::NotNormalized { integral: mass });
    }
    let kit = AxisKit::new(spec.n());
    let n = spec.n();
    let arr = per_axis(w.values.mapv(|v| C64::new(v, 0.0)), spec.d(), (n, n), |s, d| kit.inverse(s, d));
    let m = crate::linalg::symmetrize(&tensor_operator(arr, spec));
    Ok(DensityOperator::trusted(m, Representation::Lebesgue, system.clone()))
}

/// Operator `Ĝ` with `tr(TĜ) = Σ G·W_T·cell` for every `T`, from a sampled symbol.
pub fn quantize_sampled(g: &PhaseSpaceField) -> Result<Array2<C64>> {
    let spec = g.spec().clone();
    let kit = AxisKit::new(spec.n());
    let n = spec.n();
    let arr = per_axis(g.values.mapv(|v| C64::new(v, 0.0)), spec.d(), (n, n), |s, d| kit.adjoint(s, d));
    let c = tensor_operator(arr, &spec);
    let cell = spec.grid.phase_cell();
    Ok(c.t().mapv(|v| v * cell))
}

/// `Φ = W / (μ⊗ν)` pointwise.
pub fn eta_density(w: &PhaseSpaceField) -> Result<PhaseSpaceField> {
    if w.role != FieldRole::WignerMeasureDensity {
        return Err(Error::GridMismatch(format!("expected a Wigner density, got {:?}", w.role)));
    }
    let eta = eta_on_lattice(w.spec());
    let floor = w.spec().policy.underflow_floor;
    let bad = w.values.iter().zip(eta.iter()).filter(|(v, e)| **e < floor && v.abs() > 1e-12).count();
    if bad > 0 {
        return Err(Error::UnderflowRegion { count: bad });
    }
    let mut phi = w.values.clone();
    phi.zip_mut_with(&eta, |v, e| *v = if *e > 0.0 { *v / *e } else { 0.0 });
    PhaseSpaceField::new(phi, FieldRole::EtaDensity, ReferenceMeasure::MuOtimesNu, w.spec().clone())
}

/// `W = Φ · (μ⊗ν)`, inverse of [`eta_density`].
pub fn wigner_from_eta(phi: &PhaseSpaceField) -> Result<PhaseSpaceField> {
    if phi.role != FieldRole::EtaDensity {
        return Err(Error::GridMismatch(format!("expected an η-density, got {:?}", phi.role)));
    }
    let eta = eta_on_lattice(phi.spec());
    let w = &phi.values * &eta;
    PhaseSpaceField::new(w, FieldRole::WignerMeasureDensity, ReferenceMeasure::Lebesgue, phi.spec().clone())
}

/// Samples a symbol's polynomial and sampled parts on the phase lattice.
pub fn sample_symbol(g: &HamiltonianSymbol, spec: &Arc<PhaseSpaceSpec>) -> Result<PhaseSpaceField> {
    if g.dof() != spec.d() {
        return Err(Error::GridMismatch(format!("symbol has {} degrees of freedom, lattice {}", g.dof(), spec.d())));
    }
    let mut f = PhaseSpaceField::from_fn(spec.clone(), FieldRole::Symbol, ReferenceMeasure::Lebesgue, |q, p| {
        g.eval_polynomial(q, p)
    });
    if let Some(s) = g.sampled() {
        if s.spec().params() != spec.params() {
            return Err(Error::GridMismatch("sampled symbol lives on a different lattice".into()));
        }
        f.values += &s.values;
    }
    Ok(f)
}

/// `∫ G dW_T` for a Wigner density, or `∫ G Φ d(μ⊗ν)` for an η-density.
pub fn pair_expectation(field: &PhaseSpaceField, g: &HamiltonianSymbol) -> Result<f64> {
    let gs = sample_symbol(g, field.spec())?;
    let weight = match field.role {
        FieldRole::EtaDensity => eta_on_lattice(field.spec()),
        FieldRole::WignerMeasureDensity => ArrayD::from_elem(field.values.raw_dim(), 1.0),
        other => return Err(Error::GridMismatch(format!("cannot pair a {other:?} field"))),
    };
    let mut acc = 0.0;
    for ((w, g), e) in field.values.iter().zip(gs.values.iter()).zip(weight.iter()) {
        acc += w * g * e;
    }
    Ok(acc * field.cell())
}

/// Lattice axes `(q axes, p axes)` of the factors not in `keep`, and the kept subsystem.
fn traced_axes(system: &CompositeSystem, keep: &[&str]) -> Result<(Vec<usize>, Arc<CompositeSystem>)> {
    let total = system.dof();
    let sub = system.subsystem(keep)?;
    let mut traced = Vec::new();
    let mut off = 0;
    for (label, f) in system.labels().iter().zip(system.factors()) {
        if !sub.labels().contains(label) {
            for t in off..off + f.dof() {
                traced.push(t);
                traced.push(total + t);
            }
        }
        off += f.dof();
    }
    traced.sort_unstable();
    Ok((traced, sub))
}

fn check_field_system(f: &PhaseSpaceField, system: &CompositeSystem) -> Result<()> {
    let spec = system.require_phase_space()?;
    if spec.params() != f.spec().params() {
        return Err(Error::GridMismatch("field does not live on the system's phase lattice".into()));
    }
    Ok(())
}

/// Marginal of a composite Wigner density on the kept factors.
pub fn reduce_wigner(w: &PhaseSpaceField, system: &CompositeSystem, keep: &[&str]) -> Result<PhaseSpaceField> {
    check_field_system(w, system)?;
    let (traced, sub) = traced_axes(system, keep)?;
    let cell = w.spec().axis().lattice_cell();
    let mut acc = w.values.clone();
    for &ax in traced.iter().rev() {
        acc = acc.sum_axis(ndarray::Axis(ax));
    }
    let k = (traced.len() / 2) as i32;
    acc.mapv_inplace(|v| v * cell.powi(k));
    let spec = sub.require_phase_space()?.clone();
    PhaseSpaceField::new(acc, FieldRole::WignerMeasureDensity, ReferenceMeasure::Lebesgue, spec)
}

/// Reduced η-density `Φ₁ = ∫ Φ d(μ₂⊗ν₂)` over the traced factors.
pub fn reduce_eta(phi: &PhaseSpaceField, system: &CompositeSystem, keep: &[&str]) -> Result<PhaseSpaceField> {
    check_field_system(phi, system)?;
    if phi.role != FieldRole::EtaDensity {
        return Err(Error::GridMismatch(format!("expected an η-density, got {:?}", phi.role)));
    }
    let (traced, sub) = traced_axes(system, keep)?;
    let kept: Vec<&str> = sub.labels().iter().map(String::as_str).collect();
    let gone: Vec<&str> = system.labels().iter().map(String::as_str).filter(|l| !kept.contains(l)).collect();
    let traced_sys = system.subsystem(&gone)?;
    let traced_spec = traced_sys.require_phase_space()?;
    // sorted traced axes list the q axes before the p axes, matching the traced lattice layout
    let eta2 = eta_on_lattice(traced_spec);
    let mut weighted = phi.values.clone();
    let mut sub_ix = vec![0usize; traced.len()];
    for (ix, v) in weighted.indexed_iter_mut() {
        for (s, &a) in sub_ix.iter_mut().zip(&traced) {
            *s = ix[a];
        }
        *v *= eta2[IxDyn(&sub_ix)];
    }
    let cell = phi.spec().axis().lattice_cell();
    let mut acc = weighted;
    for &ax in traced.iter().rev() {
        acc = acc.sum_axis(ndarray::Axis(ax));
    }
    acc.mapv_inplace(|v| v * cell.powi((traced.len() / 2) as i32));
    let spec = sub.require_phase_space()?.clone();
    PhaseSpaceField::new(acc, FieldRole::EtaDensity, ReferenceMeasure::MuOtimesNu, spec)
}

/// Shape of the lattice a system's Wigner density lives on.
pub fn field_shape(system: &CompositeSystem) -> Result<Vec<usize>> {
    Ok(lattice_shape(system.require_phase_space()?))
}
