//! Initial-state recipes and seeded random states.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::C64;
use crate::hilbert::{pure_density, CompositeSystem, DensityOperator, Factor, Representation, StateVector};
use crate::lattice::PhaseSpaceSpec;
use crate::linalg;

/// Oscillator eigenfunction `ψ_k(x)` (unit frequency), by the stable three-term recurrence.
pub fn hermite_function(k: usize, x: f64) -> f64 {
    let mut prev = 0.0;
    let mut cur = PI.powf(-0.25) * (-x * x / 2.0).exp();
    for j in 0..k {
        let next = (2.0 / (j as f64 + 1.0)).sqrt() * x * cur - (j as f64 / (j as f64 + 1.0)).sqrt() * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Single-mode state recipes; applied mode by mode to every degree of freedom of a factor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StateRecipe {
    Ground,
    Displaced {
        a: f64,
        #[serde(default)]
        p: f64,
    },
    Cat {
        a: f64,
    },
    Thermal {
        beta: f64,
    },
    Fock {
        k: usize,
    },
    /// One recipe per factor, in system order.
    Product {
        parts: Vec<StateRecipe>,
    },
}

enum ModeState {
    Pure(Array1<C64>),
    Mixed(Array2<C64>),
}

fn grid_mode(recipe: &StateRecipe, spec: &PhaseSpaceSpec) -> Result<ModeState> {
    let ax = spec.axis();
    let x = ax.positions();
    let s = ax.step().sqrt();
    let coeffs = |f: &dyn Fn(f64) -> C64| -> Array1<C64> { x.mapv(|x| f(x) * s) };
    Ok(match recipe {
        StateRecipe::Ground => ModeState::Pure(coeffs(&|x| C64::new(hermite_function(0, x), 0.0))),
        StateRecipe::Fock { k } => ModeState::Pure(coeffs(&|x| C64::new(hermite_function(*k, x), 0.0))),
        StateRecipe::Displaced { a, p } => {
            ModeState::Pure(coeffs(&|x| C64::from_polar(hermite_function(0, x - a), p * x)))
        }
        StateRecipe::Cat { a } => {
            ModeState::Pure(coeffs(&|x| C64::new(hermite_function(0, x - a) + hermite_function(0, x + a), 0.0)))
        }
        StateRecipe::Thermal { beta } => {
            if !(*beta > 0.0) {
                return Err(Error::InvalidRun(format!("thermal state needs beta > 0, got {beta}")));
            }
            let n = x.len();
            let mut m = Array2::<C64>::zeros((n, n));
            for k in 0..40 {
                let w = (-beta * k as f64).exp();
                if w < 1e-16 {
                    break;
                }
                let v = coeffs(&|x| C64::new(hermite_function(k, x), 0.0));
                let norm = v.iter().map(|c| c.norm_sqr()).sum::<f64>();
                for i in 0..n {
                    for l in 0..n {
                        m[[i, l]] += v[i] * v[l].conj() * (w / norm);
                    }
                }
            }
            ModeState::Mixed(m)
        }
        StateRecipe::Product { .. } => return Err(Error::InvalidRun("nested product recipe".into())),
    })
}

fn coherent_levels(n: usize, alpha: C64) -> Array1<C64> {
    let mut v = Array1::zeros(n);
    let mut c = C64::new((-alpha.norm_sqr() / 2.0).exp(), 0.0);
    for k in 0..n {
        v[k] = c;
        c = c * alpha / ((k + 1) as f64).sqrt();
    }
    v
}

fn level_mode(recipe: &StateRecipe, n: usize) -> Result<ModeState> {
    Ok(match recipe {
        StateRecipe::Ground => ModeState::Pure(coherent_levels(n, C64::new(0.0, 0.0))),
        StateRecipe::Fock { k } => {
            if *k >= n {
                return Err(Error::InvalidRun(format!("Fock level {k} exceeds truncation {n}")));
            }
            let mut v = Array1::zeros(n);
            v[*k] = C64::new(1.0, 0.0);
            ModeState::Pure(v)
        }
        StateRecipe::Displaced { a, p } => {
            ModeState::Pure(coherent_levels(n, C64::new(*a, *p) / std::f64::consts::SQRT_2))
        }
        StateRecipe::Cat { a } => {
            let al = C64::new(*a / std::f64::consts::SQRT_2, 0.0);
            ModeState::Pure(&coherent_levels(n, al) + &coherent_levels(n, -al))
        }
        StateRecipe::Thermal { beta } => {
            if !(*beta > 0.0) {
                return Err(Error::InvalidRun(format!("thermal state needs beta > 0, got {beta}")));
            }
            ModeState::Mixed(Array2::from_diag(&Array1::from_shape_fn(n, |k| C64::new((-beta * k as f64).exp(), 0.0))))
        }
        StateRecipe::Product { .. } => return Err(Error::InvalidRun("nested product recipe".into())),
    })
}

fn to_matrix(m: ModeState) -> Array2<C64> {
    let mut out = match m {
        ModeState::Pure(v) => {
            let n = v.len();
            Array2::from_shape_fn((n, n), |(i, l)| v[i] * v[l].conj())
        }
        ModeState::Mixed(m) => m,
    };
    let tr = linalg::trace(&out).re;
    out.mapv_inplace(|v| v / tr);
    out
}

fn factor_matrix(recipe: &StateRecipe, f: &Factor) -> Result<Array2<C64>> {
    match f {
        Factor::Grid(spec) => {
            let one = to_matrix(grid_mode(recipe, spec)?);
            Ok(linalg::kron_all(&vec![one; spec.d()]))
        }
        Factor::Levels(n) => Ok(to_matrix(level_mode(recipe, *n)?)),
    }
}

/// Density operator for a recipe; a non-product recipe is applied to every factor.
pub fn prepare(recipe: &StateRecipe, system: &Arc<CompositeSystem>) -> Result<DensityOperator> {
    let parts: Vec<StateRecipe> = match recipe {
        StateRecipe::Product { parts } => {
            if parts.len() != system.factors().len() {
                return Err(Error::InvalidRun(format!(
                    "product recipe has {} parts for {} factors",
                    parts.len(),
                    system.factors().len()
                )));
            }
            parts.clone()
        }
        r => vec![r.clone(); system.factors().len()],
    };
    let mats: Vec<Array2<C64>> =
        parts.iter().zip(system.factors()).map(|(r, f)| factor_matrix(r, f)).collect::<Result<_>>()?;
    DensityOperator::new(linalg::kron_all(&mats), Representation::Lebesgue, system.clone())
}

/// Normalized state with Lebesgue values `f(x)` on a single grid.
pub fn grid_state(system: &Arc<CompositeSystem>, f: impl Fn(&[f64]) -> C64) -> Result<StateVector> {
    let spec = system.require_phase_space()?;
    let values = Array1::from_shape_fn(spec.dim(), |i| f(&spec.grid.point(i)));
    StateVector::normalized(values, Representation::Lebesgue, system.clone())
}

/// Ground state of `Σ (p_t² + q_t²)/2 + g q_1 q_2` for two modes, written in normal coordinates.
pub fn coupled_oscillator_ground(system: &Arc<CompositeSystem>, g: f64) -> Result<DensityOperator> {
    if system.dof() != 2 || !(g.abs() < 1.0) {
        return Err(Error::InvalidRun("coupled oscillator needs two modes and |g| < 1".into()));
    }
    let (wp, wm) = ((1.0 + g).sqrt(), (1.0 - g).sqrt());
    let psi = grid_state(system, |x| {
        let (sp, sm) = ((x[0] + x[1]) / std::f64::consts::SQRT_2, (x[0] - x[1]) / std::f64::consts::SQRT_2);
        C64::new((-(wp * sp * sp + wm * sm * sm) / 2.0).exp(), 0.0)
    })?;
    pure_density(&psi)
}

/// Analytic purity of either mode of [`coupled_oscillator_ground`].
pub fn coupled_oscillator_reduced_purity(g: f64) -> f64 {
    let (wp, wm) = ((1.0 + g).sqrt(), (1.0 - g).sqrt());
    let r = (wp / wm).sqrt();
    2.0 / (r + 1.0 / r)
}

/// Random mixed state of the given rank, spanned by the lowest `basis` oscillator
/// eigenfunctions per mode; smooth and well inside a grid sized for unit covariance.
pub fn random_mixed_state<R: Rng + ?Sized>(
    system: &Arc<CompositeSystem>,
    basis: usize,
    rank: usize,
    rng: &mut R,
) -> Result<DensityOperator> {
    let spec = system.require_phase_space()?;
    let d = spec.d();
    let ax = spec.axis();
    let x = ax.positions();
    let s = ax.step().sqrt();
    let modes: Vec<Array1<f64>> = (0..basis).map(|k| x.mapv(|x| hermite_function(k, x) * s)).collect();
    let nb = basis.pow(d as u32);
    let dim = spec.dim();
    let mut m = Array2::<C64>::zeros((dim, dim));
    for _ in 0..rank.max(1) {
        let coeffs: Vec<C64> = (0..nb)
            .map(|_| {
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                C64::new(re, im)
            })
            .collect();
        let mut v = Array1::<C64>::zeros(dim);
        for (b, c) in coeffs.iter().enumerate() {
            let mut ks = vec![0; d];
            let mut rem = b;
            for t in (0..d).rev() {
                ks[t] = rem % basis;
                rem /= basis;
            }
            for (i, vi) in v.iter_mut().enumerate() {
                let mut prod = 1.0;
                let mut r = i;
                for t in (0..d).rev() {
                    prod *= modes[ks[t]][r % ax.n];
                    r /= ax.n;
                }
                *vi += c * prod;
            }
        }
        let w: f64 = rng.random::<f64>() + 0.05;
        let norm = v.iter().map(|c| c.norm_sqr()).sum::<f64>();
        for i in 0..dim {
            for l in 0..dim {
                m[[i, l]] += v[i] * v[l].conj() * (w / norm);
            }
        }
    }
    let tr = linalg::trace(&m).re;
    m.mapv_inplace(|v| v / tr);
    Ok(DensityOperator::trusted(linalg::symmetrize(&m), Representation::Lebesgue, system.clone()))
}

/// Random mixed state on any system (Ginibre construction).
pub fn random_density<R: Rng + ?Sized>(system: &Arc<CompositeSystem>, rank: usize, rng: &mut R) -> DensityOperator {
    let dim = system.dim();
    let g = Array2::from_shape_fn((dim, rank.max(1)), |_| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        C64::new(re, im)
    });
    let mut m = g.dot(&linalg::dagger(&g));
    let tr = linalg::trace(&m).re;
    m.mapv_inplace(|v| v / tr);
    DensityOperator::trusted(linalg::symmetrize(&m), Representation::Lebesgue, system.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::make_phase_space;
    use ndarray::arr2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hermite_functions_are_orthonormal() {
        let spec = make_phase_space(1, 64, 7.5, arr2(&[[1.0]])).unwrap();
        let x = spec.grid.axis.positions();
        let h = spec.grid.axis.step();
        for a in 0..8 {
            for b in 0..8 {
                let ip: f64 = x.iter().map(|&x| hermite_function(a, x) * hermite_function(b, x)).sum::<f64>() * h;
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((ip - want).abs() < 1e-10, "{a} {b} {ip}");
            }
        }
    }

    #[test]
    fn recipes_produce_valid_states() {
        let spec = make_phase_space(1, 64, 7.5, arr2(&[[1.0]])).unwrap();
        let sys = CompositeSystem::single(spec);
        for r in [
            StateRecipe::Ground,
            StateRecipe::Displaced { a: 1.0, p: -0.5 },
            StateRecipe::Cat { a: 2.0 },
            StateRecipe::Thermal { beta: 0.7 },
            StateRecipe::Fock { k: 3 },
        ] {
            let t = prepare(&r, &sys).unwrap();
            assert!((t.trace() - 1.0).abs() < 1e-12);
        }
        let lv = CompositeSystem::new(vec![("A".into(), Factor::Levels(4)), ("B".into(), Factor::Levels(3))]).unwrap();
        let t = prepare(
            &StateRecipe::Product {
                parts: vec![StateRecipe::Displaced { a: 0.5, p: 0.0 }, StateRecipe::Thermal { beta: 1.0 }],
            },
            &lv,
        )
        .unwrap();
        assert!(t.purity() < 1.0);
        assert!(prepare(&StateRecipe::Product { parts: vec![StateRecipe::Ground] }, &lv).is_err());
    }

    #[test]
    fn random_states_are_valid_and_seeded() {
        let spec = make_phase_space(1, 64, 7.5, arr2(&[[1.0]])).unwrap();
        let sys = CompositeSystem::single(spec);
        let a = random_mixed_state(&sys, 8, 3, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let b = random_mixed_state(&sys, 8, 3, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_eq!(a.matrix(), b.matrix());
        a.validate().unwrap();
        assert!(a.purity() < 1.0);
    }

    #[test]
    fn coupled_ground_has_analytic_purity() {
        let spec = make_phase_space(1, 32, 6.0, arr2(&[[0.5]])).unwrap();
        let sys =
            CompositeSystem::new(vec![("A".into(), Factor::Grid(spec.clone())), ("B".into(), Factor::Grid(spec))])
                .unwrap();
        let t = coupled_oscillator_ground(&sys, 0.5).unwrap();
        let r = crate::hilbert::partial_trace(&t, &["A"]).unwrap();
        assert!((r.purity() - coupled_oscillator_reduced_purity(0.5)).abs() < 1e-8);
    }
}
