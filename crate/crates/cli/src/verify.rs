//! The invariant suite behind `phaselab verify`.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{arr2, Array2};
use phaselab::feedback::{
    classify_coupling, feedback_coupling, CouplingSpec, FeedbackClass, LocalOperator, Role, SubsystemLayout,
};
use phaselab::fourier::C64;
use phaselab::hilbert::{partial_trace, tensor, CompositeSystem, DensityOperator, Factor};
use phaselab::lattice::{make_phase_space, GaussianMeasure, PhaseSpaceSpec};
use phaselab::linalg;
use phaselab::moyal::{gaussian_measure_derivative, moyal_rhs, DerivativeScheme, MoyalGenerator};
use phaselab::states::{coupled_oscillator_ground, random_mixed_state};
use phaselab::symbol::{HamiltonianSymbol, Monomial};
use phaselab::weyl::{expectation, ladder_position};
use phaselab::wigner::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::VerifyConfig;
use crate::error::Result;

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub invariant: &'static str,
    /// Lattice points per axis, for lattice-dependent checks.
    pub size: Option<usize>,
    pub residual: f64,
    pub tolerance: f64,
    pub bound: Bound,
    pub pass: bool,
}

/// Whether the tolerance caps the residual from above or below.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    Upper,
    Lower,
}

impl Check {
    fn new(invariant: &'static str, size: Option<usize>, residual: f64, tolerance: f64) -> Self {
        Self { invariant, size, residual, tolerance, bound: Bound::Upper, pass: residual <= tolerance }
    }

    fn at_least(invariant: &'static str, size: Option<usize>, residual: f64, tolerance: f64) -> Self {
        Self { invariant, size, residual, tolerance, bound: Bound::Lower, pass: residual >= tolerance }
    }
}

/// Band limit of the random test states.
const BASIS: usize = 5;

fn random_states(sys: &Arc<CompositeSystem>, count: usize, rng: &mut ChaCha8Rng) -> Result<Vec<DensityOperator>> {
    (0..count).map(|k| Ok(random_mixed_state(sys, BASIS, 1 + k % 3, rng)?)).collect()
}

fn monomials(max_degree: usize) -> Vec<HamiltonianSymbol> {
    let mut out = Vec::new();
    for a in 0..=max_degree {
        for b in 0..=max_degree - a {
            out.push(HamiltonianSymbol::polynomial(1, vec![Monomial::new(vec![a], vec![b], 1.0)]).expect("one mode"));
        }
    }
    out
}

fn random_symbol(rng: &mut ChaCha8Rng) -> HamiltonianSymbol {
    let c: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
    HamiltonianSymbol::from_terms(1, &[(&[2], &[0], c[0]), (&[1], &[1], c[1]), (&[0], &[2], c[2]), (&[0], &[1], c[3])])
        .expect("one mode")
}

fn lattice_checks(spec: &Arc<PhaseSpaceSpec>, count: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Check>> {
    let n = Some(spec.n());
    let sys = CompositeSystem::single(spec.clone());
    let states = random_states(&sys, count, rng)?;
    let mono = monomials(4);
    let (mut mass, mut bound, mut purity, mut route, mut inversion, mut pairing) = (0f64, 0f64, 0f64, 0f64, 0f64, 0f64);
    let (mut eta_mass, mut eta_pairing) = (0f64, 0f64);
    for t in &states {
        let w = wigner_from_density(t)?;
        mass = mass.max((w.integral() - 1.0).abs());
        bound = bound.max(w.max_abs() - 1.0 / PI);
        purity = purity.max((w.purity() - t.purity()).abs());
        let other = wigner_from_weyl_function(&weyl_function_samples(t)?, spec)?;
        route = route.max(other.max_abs_diff(&w)?);
        let back = inverse_wigner(&w)?;
        inversion = inversion.max(linalg::frobenius(&(back.matrix() - t.matrix())) / linalg::frobenius(t.matrix()));
        for g in &mono {
            pairing = pairing.max((pair_expectation(&w, g)? - expectation(t, g)?).abs());
        }
        let phi = eta_density(&w)?;
        eta_mass = eta_mass.max((phi.integral_against_eta() - 1.0).abs());
        for g in [HamiltonianSymbol::harmonic(1), random_symbol(rng)] {
            eta_pairing = eta_pairing.max((pair_expectation(&phi, &g)? - expectation(t, &g)?).abs());
        }
    }

    let w = wigner_from_density(&states[0])?;
    let rhs = |h: &HamiltonianSymbol, k: usize| -> Result<_> {
        let g = MoyalGenerator::new(h, k, DerivativeScheme::Spectral, spec.clone())?;
        Ok(moyal_rhs(&w, &g)?)
    };
    let quad = HamiltonianSymbol::from_terms(
        1,
        &[(&[2], &[0], 0.7), (&[1], &[1], 0.3), (&[0], &[2], 0.5), (&[1], &[0], -0.2)],
    )?;
    let quartic = HamiltonianSymbol::from_terms(1, &[(&[2], &[0], 0.5), (&[0], &[2], 0.5), (&[4], &[0], 0.1)])?;
    let series_quad = rhs(&quad, 1)?.max_abs_diff(&rhs(&quad, 4)?)?;
    let series_quartic = rhs(&quartic, 2)?.max_abs_diff(&rhs(&quartic, 4)?)?;

    Ok(vec![
        Check::new("wigner_normalization", n, mass, 1e-8),
        Check::new("wigner_bound", n, bound.max(0.0), 1e-8),
        Check::new("wigner_purity", n, purity, 1e-6),
        Check::new("route_equivalence", n, route, 1e-6),
        Check::new("inversion_round_trip", n, inversion, 1e-8),
        Check::new("expectation_pairing", n, pairing, 1e-6),
        Check::new("eta_normalization", n, eta_mass, 1e-8),
        Check::new("eta_pairing", n, eta_pairing, 1e-6),
        Check::new("series_termination_quadratic", n, series_quad, 1e-12),
        Check::new("series_termination_quartic", n, series_quartic, 1e-12),
    ])
}

fn commuting_square(rng: &mut ChaCha8Rng) -> Result<Vec<Check>> {
    let spec = make_phase_space(1, 16, 6.0, arr2(&[[0.25]]))?;
    let sys = CompositeSystem::new(vec![("A".into(), Factor::Grid(spec.clone())), ("B".into(), Factor::Grid(spec))])?;
    let (sub_a, sub_b) = (sys.subsystem(&["A"])?, sys.subsystem(&["B"])?);
    let gap = |t: &DensityOperator| -> Result<f64> {
        let reduced = reduce_wigner(&wigner_from_density(t)?, &sys, &["A"])?;
        Ok(reduced.max_abs_diff(&wigner_from_density(&partial_trace(t, &["A"])?)?)?)
    };
    let mut product = 0f64;
    for _ in 0..2 {
        let a = random_mixed_state(&sub_a, 3, 2, rng)?;
        let b = random_mixed_state(&sub_b, 3, 2, rng)?;
        product = product.max(gap(&tensor(&a, &b, &sys)?)?);
    }
    let entangled = gap(&coupled_oscillator_ground(&sys, 0.4)?)?;
    Ok(vec![
        Check::new("commuting_square_product", Some(16), product, 1e-8),
        Check::new("commuting_square_entangled", Some(16), entangled, 1e-6),
    ])
}

fn fd4(f: impl Fn(f64) -> f64, e: f64) -> f64 {
    (-f(2.0 * e) + 8.0 * f(e) - 8.0 * f(-e) + f(-2.0 * e)) / (12.0 * e)
}

fn wick(rng: &mut ChaCha8Rng) -> Result<Check> {
    let mut worst = 0f64;
    for _ in 0..10 {
        let a = Array2::from_shape_fn((2, 2), |_| rng.random_range(-1.0..1.0));
        let m = GaussianMeasure::new(a.dot(&a.t()) + Array2::<f64>::eye(2) * 0.3)?;
        let mut draw = || [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let (x, h1, h2) = (draw(), draw(), draw());
        let f = |s: f64, t: f64| m.density(&[x[0] + s * h1[0] + t * h2[0], x[1] + s * h1[1] + t * h2[1]]);
        let d1 = gaussian_measure_derivative(&m, &[h1.to_vec()], &x)?;
        let d2 = gaussian_measure_derivative(&m, &[h1.to_vec(), h2.to_vec()], &x)?;
        worst = worst.max((fd4(|s| f(s, 0.0), 1e-3) - d1).abs());
        worst = worst.max((fd4(|t| fd4(|s| f(s, t), 5e-3), 5e-3) - d2).abs());
    }
    Ok(Check::new("wick_derivatives", None, worst, 1e-7))
}

fn random_hermitian(n: usize, rng: &mut ChaCha8Rng) -> Array2<C64> {
    let g = Array2::from_shape_fn((n, n), |_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    linalg::symmetrize(&g)
}

/// Builder residuals (infinite when the class comes out wrong) and the product counterexample.
fn classifier(rng: &mut ChaCha8Rng) -> Result<Vec<Check>> {
    let layout = SubsystemLayout::levels(&[Role::P1, Role::P2, Role::C1, Role::C2], 2)?;
    let fb = feedback_coupling(&random_hermitian(4, rng), &random_hermitian(4, rng), &layout)?;
    let nf =
        CouplingSpec { terms: vec![LocalOperator::new(&["P1", "C1"], random_hermitian(4, rng))] }.operator(&layout)?;
    let q = ladder_position(2);
    let four = linalg::kron_all(&[q.clone(), q.clone(), q.clone(), q]);
    let graded = |k: &Array2<C64>, want: FeedbackClass| -> Result<f64> {
        let v = classify_coupling(k, &layout)?;
        Ok(if v.class == want { v.residual } else { f64::INFINITY })
    };
    let product = classify_coupling(&four, &layout)?;
    let product_residual = if product.class == FeedbackClass::General { product.residual } else { 0.0 };
    Ok(vec![
        Check::new("classifier_feedback", None, graded(&fb, FeedbackClass::Feedback)?, 1e-8),
        Check::new("classifier_no_feedback", None, graded(&nf, FeedbackClass::NoFeedback)?, 1e-8),
        Check::at_least("classifier_product_residual", None, product_residual, 1e-2),
    ])
}

pub fn run_suite(cfg: &VerifyConfig, seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for &n in &cfg.sizes {
        let spec = make_phase_space(1, n, cfg.half_width, arr2(&[[cfg.variance]]))?;
        log::info!("verify: lattice n = {n}");
        out.extend(lattice_checks(&spec, cfg.states, &mut rng)?);
    }
    out.extend(commuting_square(&mut rng)?);
    out.push(wick(&mut rng)?);
    out.extend(classifier(&mut rng)?);
    Ok(out)
}
