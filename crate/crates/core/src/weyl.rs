//! Weyl quantization, Weyl unitaries `𝒲(h) = e^{-iĥ}` and the Weyl function `tr(T𝒲(h))`.

use std::sync::Arc;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::fourier::{unitary_dft, wavenumbers, C64};
use crate::hilbert::{CompositeSystem, DensityOperator, Factor};
use crate::lattice::Axis;
use crate::linalg;
use crate::symbol::{HamiltonianSymbol, PhasePoint, DEGREE_CAP};
use crate::wigner;

/// `q̂ = diag(x_i)` on one grid axis.
pub fn grid_position(axis: &Axis) -> Array2<C64> {
    Array2::from_diag(&axis.positions().mapv(|x| C64::new(x, 0.0)))
}

/// `p̂ = U† diag(k) U` with the unitary DFT `U`; the Nyquist wavenumber is `-π/h`.
pub fn grid_momentum(axis: &Axis) -> Array2<C64> {
    let u = unitary_dft(axis.n);
    let k = wavenumbers(axis.n, axis.step());
    let mut ku = u.clone();
    for (mut row, &kk) in ku.rows_mut().into_iter().zip(k.iter()) {
        row.mapv_inplace(|v| v * kk);
    }
    linalg::symmetrize(&linalg::dagger(&u).dot(&ku))
}

fn annihilation(n: usize) -> Array2<C64> {
    let mut a = Array2::zeros((n, n));
    for k in 1..n {
        a[[k - 1, k]] = C64::new((k as f64).sqrt(), 0.0);
    }
    a
}

/// `(a + a†)/√2` truncated to `n` levels.
pub fn ladder_position(n: usize) -> Array2<C64> {
    let a = annihilation(n);
    (&a + &linalg::dagger(&a)).mapv(|v| v * std::f64::consts::FRAC_1_SQRT_2)
}

/// `i(a† - a)/√2` truncated to `n` levels.
pub fn ladder_momentum(n: usize) -> Array2<C64> {
    let a = annihilation(n);
    (&linalg::dagger(&a) - &a).mapv(|v| v * C64::new(0.0, std::f64::consts::FRAC_1_SQRT_2))
}

/// Position and momentum operators of every degree of freedom, each on its own mode space.
#[derive(Clone, Debug)]
pub struct ModeOperators {
    pub q: Vec<Array2<C64>>,
    pub p: Vec<Array2<C64>>,
}

impl ModeOperators {
    pub fn of(system: &CompositeSystem) -> Self {
        let mut q = Vec::new();
        let mut p = Vec::new();
        for f in system.factors() {
            match f {
                Factor::Grid(s) => {
                    let ax = s.axis();
                    let (qq, pp) = (grid_position(&ax), grid_momentum(&ax));
                    for _ in 0..s.d() {
                        q.push(qq.clone());
                        p.push(pp.clone());
                    }
                }
                Factor::Levels(n) => {
                    q.push(ladder_position(*n));
                    p.push(ladder_momentum(*n));
                }
            }
        }
        Self { q, p }
    }

    pub fn dof(&self) -> usize {
        self.q.len()
    }

    pub fn mode_dim(&self, t: usize) -> usize {
        self.q[t].nrows()
    }

    /// Embeds a single-mode operator into the full space.
    pub fn embed(&self, t: usize, op: &Array2<C64>) -> Array2<C64> {
        let ops: Vec<Array2<C64>> =
            (0..self.dof()).map(|s| if s == t { op.clone() } else { linalg::identity(self.mode_dim(s)) }).collect();
        linalg::kron_all(&ops)
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

/// Symmetric (Weyl) ordering of `q^a p^b`: the average of all distinct words in `a` copies of `q` and `b` of `p`.
///
/// The word sum obeys `S(a,b) = q S(a-1,b) + p S(a,b-1)`.
pub fn weyl_ordered(q: &Array2<C64>, p: &Array2<C64>, a: usize, b: usize) -> Array2<C64> {
    let n = q.nrows();
    let mut table: Vec<Vec<Array2<C64>>> = Vec::with_capacity(a + 1);
    for i in 0..=a {
        let mut row: Vec<Array2<C64>> = Vec::with_capacity(b + 1);
        for j in 0..=b {
            let s = if i == 0 && j == 0 {
                linalg::identity(n)
            } else {
                let mut acc = Array2::<C64>::zeros((n, n));
                if i > 0 {
                    acc += &q.dot(&table[i - 1][j]);
                }
                if j > 0 {
                    acc += &p.dot(&row[j - 1]);
                }
                acc
            };
            row.push(s);
        }
        table.push(row);
    }
    let words = binomial(a + b, a);
    table[a][b].mapv(|v| v / words)
}

/// McCoy's form `2^{-a} Σ_k C(a,k) q^k p^b q^{a-k}`, equal to [`weyl_ordered`] when `[q, p] = i`.
pub fn mccoy_ordered(q: &Array2<C64>, p: &Array2<C64>, a: usize, b: usize) -> Array2<C64> {
    let pow = |m: &Array2<C64>, k: usize| (0..k).fold(linalg::identity(m.nrows()), |acc, _| acc.dot(m));
    let pb = pow(p, b);
    let mut acc = Array2::zeros(q.dim());
    for k in 0..=a {
        let term = pow(q, k).dot(&pb).dot(&pow(q, a - k));
        acc.scaled_add(C64::new(binomial(a, k), 0.0), &term);
    }
    acc.mapv(|v| v / 2f64.powi(a as i32))
}

fn check_dof(s: &HamiltonianSymbol, system: &CompositeSystem) -> Result<()> {
    if s.dof() != system.dof() {
        return Err(Error::SpecMismatch(format!(
            "symbol has {} degrees of freedom, system has {}",
            s.dof(),
            system.dof()
        )));
    }
    Ok(())
}

/// Hermitian operator with Weyl symbol `s` in the orthonormal grid basis.
pub fn weyl_quantize(s: &HamiltonianSymbol, system: &Arc<CompositeSystem>) -> Result<Array2<C64>> {
    check_dof(s, system)?;
    let deg = s.degree();
    if deg > DEGREE_CAP {
        return Err(Error::DegreeTooHigh { degree: deg, cap: DEGREE_CAP });
    }
    let modes = ModeOperators::of(system);
    let dim = system.dim();
    let mut out = Array2::<C64>::zeros((dim, dim));
    for term in s.terms() {
        if term.coeff == 0.0 {
            continue;
        }
        let ops: Vec<Array2<C64>> = (0..modes.dof())
            .map(|t| {
                let (a, b) = (term.powers_q[t], term.powers_p[t]);
                if a == 0 && b == 0 {
                    linalg::identity(modes.mode_dim(t))
                } else {
                    weyl_ordered(&modes.q[t], &modes.p[t], a, b)
                }
            })
            .collect();
        out.scaled_add(C64::new(term.coeff, 0.0), &linalg::kron_all(&ops));
    }
    if let Some(field) = s.sampled() {
        let spec = system
            .require_phase_space()
            .map_err(|_| Error::DomainOverflow("sampled symbols need a system with a joint phase grid".into()))?;
        if field.spec().params() != spec.params() {
            return Err(Error::DomainOverflow("sampled symbol lives on a different lattice".into()));
        }
        out += &wigner::quantize_sampled(field)?;
    }
    Ok(linalg::symmetrize(&out))
}

/// `𝒲(h) = exp(-i(⟨p_h, q̂⟩ + ⟨q_h, p̂⟩))`.
pub fn weyl_unitary(h: &PhasePoint, system: &CompositeSystem) -> Result<Array2<C64>> {
    let modes = ModeOperators::of(system);
    if h.q.len() != modes.dof() || h.p.len() != modes.dof() {
        return Err(Error::SpecMismatch(format!(
            "phase point has dimension {}, system has {} degrees of freedom",
            h.q.len(),
            modes.dof()
        )));
    }
    let mut ops = Vec::with_capacity(modes.dof());
    for t in 0..modes.dof() {
        let gen = &modes.q[t].mapv(|v| v * h.p[t]) + &modes.p[t].mapv(|v| v * h.q[t]);
        ops.push(linalg::expm_hermitian(&gen, 1.0)?);
    }
    Ok(linalg::kron_all(&ops))
}

/// `𝒲_T(h) = tr(T 𝒲(h))`.
pub fn weyl_function(t: &DensityOperator, h: &PhasePoint) -> Result<C64> {
    let u = weyl_unitary(h, t.system())?;
    Ok(linalg::trace_product(t.matrix(), &u))
}

/// `tr(T Ĝ)`.
pub fn expectation(t: &DensityOperator, s: &HamiltonianSymbol) -> Result<f64> {
    let g = weyl_quantize(s, t.system())?;
    let v = linalg::trace_product(t.matrix(), &g);
    debug_assert!(v.im.abs() <= 1e-10 * v.re.abs().max(1.0), "imaginary residue {}", v.im);
    Ok(v.re)
}
