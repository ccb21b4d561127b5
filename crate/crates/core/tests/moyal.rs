mod common;

use std::f64::consts::PI;

use common::*;
use ndarray::Dimension;
use phaselab::error::Error;
use phaselab::field::{FieldRole, PhaseSpaceField, ReferenceMeasure};
use phaselab::lattice::GaussianMeasure;
use phaselab::linalg;
use phaselab::moyal::*;
use phaselab::states::{prepare, random_mixed_state, StateRecipe};
use phaselab::symbol::{HamiltonianSymbol, ScheduleSegment};
use phaselab::weyl::weyl_quantize;
use phaselab::wigner::{eta_density, wigner_from_density, wigner_from_eta};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn quartic(c: f64) -> HamiltonianSymbol {
    HamiltonianSymbol::from_terms(1, &[(&[2], &[0], 0.5), (&[0], &[2], 0.5), (&[4], &[0], c)]).unwrap()
}

fn interior(spec: &phaselab::lattice::PhaseSpaceSpec, ix: &[usize], margin: usize) -> bool {
    let last = 2 * spec.n() - 1;
    ix.iter().all(|&k| k >= margin && k + margin <= last)
}

/// Fourth-order central third derivative.
fn fd3(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (-f(x + 3.0 * h) + 8.0 * f(x + 2.0 * h) - 13.0 * f(x + h) + 13.0 * f(x - h) - 8.0 * f(x - 2.0 * h) + f(x - 3.0 * h))
        / (8.0 * h * h * h)
}

#[test]
fn bracket_of_q_with_p_is_one() {
    let s = spec1(32, 6.0, 0.5);
    let psi = PhaseSpaceField::from_fn(s.clone(), FieldRole::Symbol, ReferenceMeasure::Lebesgue, |q, _| q[0]);
    let h = HamiltonianSymbol::from_terms(1, &[(&[0], &[1], 1.0)]).unwrap();
    let out = poisson_power(&psi, &h, 1, DerivativeScheme::FiniteDifference4th).unwrap();
    for (ix, v) in out.values.indexed_iter() {
        if interior(&s, ix.slice(), 2) {
            assert!((v - 1.0).abs() < 1e-10, "{v}");
        }
    }
}

#[test]
fn bracket_of_a_symbol_with_itself_vanishes() {
    let s = spec1(32, 6.0, 0.5);
    let bump = PhaseSpaceField::from_fn(s.clone(), FieldRole::Symbol, ReferenceMeasure::Lebesgue, |q, p| {
        (-(q[0] - 0.3).powi(2) - 0.5 * p[0] * p[0] + 0.2 * q[0] * p[0]).exp()
    });
    let h = HamiltonianSymbol::zero(1).with_sampled(bump.clone()).unwrap();
    let out = poisson_power(&bump, &h, 1, DerivativeScheme::Spectral).unwrap();
    assert!(out.max_abs() < 1e-10, "{}", out.max_abs());

    let poly = HamiltonianSymbol::harmonic(1);
    let hf = PhaseSpaceField::from_fn(s.clone(), FieldRole::Symbol, ReferenceMeasure::Lebesgue, |q, p| {
        poly.eval_polynomial(q, p)
    });
    let out = poisson_power(&hf, &poly, 1, DerivativeScheme::FiniteDifference4th).unwrap();
    for (ix, v) in out.values.indexed_iter() {
        if interior(&s, ix.slice(), 2) {
            assert!(v.abs() < 1e-10);
        }
    }
}

#[test]
fn third_bracket_with_quartic_matches_finite_differences() {
    let s = spec1(64, 6.0, 0.5);
    let psi = coherent_field(&s, 0.7, -0.4);
    let h = HamiltonianSymbol::from_terms(1, &[(&[4], &[0], 1.0)]).unwrap();
    let out = poisson_power(&psi, &h, 3, DerivativeScheme::Spectral).unwrap();
    let ax = s.axis();
    let mut worst: f64 = 0.0;
    for (ix, v) in out.values.indexed_iter() {
        let (q, p) = (ax.lattice_position(ix[0]), ax.lattice_momentum(ix[1]));
        // only α = (0, 3) survives: -∂_p³Ψ · ∂_q³H
        let want = -24.0 * q * fd3(|pp| coherent_wigner(q, pp, 0.7, -0.4), p, 1e-2);
        worst = worst.max((v - want).abs());
    }
    assert!(worst < 1e-5, "{worst}");
    assert!(matches!(poisson_power(&psi, &h, 12, DerivativeScheme::Spectral), Err(Error::OrderOverflow { .. })));
}

#[test]
fn harmonic_ground_state_is_stationary() {
    let s = spec1(64, 6.0, 0.5);
    let gen = MoyalGenerator::new(&HamiltonianSymbol::harmonic(1), 3, DerivativeScheme::Spectral, s.clone()).unwrap();
    let rhs = moyal_rhs(&coherent_field(&s, 0.0, 0.0), &gen).unwrap();
    assert!(rhs.max_abs() < 1e-8, "{}", rhs.max_abs());
}

#[test]
fn harmonic_rhs_is_the_liouville_term() {
    let s = spec1(64, 7.5, 0.5);
    let a = 1.2;
    let w = coherent_field(&s, a, 0.0);
    for k in [1, 3] {
        let gen =
            MoyalGenerator::new(&HamiltonianSymbol::harmonic(1), k, DerivativeScheme::Spectral, s.clone()).unwrap();
        let rhs = moyal_rhs(&w, &gen).unwrap();
        let want =
            PhaseSpaceField::from_fn(s.clone(), FieldRole::WignerMeasureDensity, ReferenceMeasure::Lebesgue, |q, p| {
                -2.0 * a * p[0] * coherent_wigner(q[0], p[0], a, 0.0)
            });
        assert!(rhs.max_abs_diff(&want).unwrap() < 1e-10);
    }
}

#[test]
fn series_terminates_for_polynomial_symbols() {
    let s = spec1(64, 6.0, 0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let t = random_mixed_state(&system(&s), 4, 2, &mut rng).unwrap();
    let w = wigner_from_density(&t).unwrap();
    let quad = HamiltonianSymbol::from_terms(
        1,
        &[(&[2], &[0], 0.7), (&[1], &[1], 0.3), (&[0], &[2], 0.5), (&[1], &[0], -0.2)],
    )
    .unwrap();
    let rhs = |h: &HamiltonianSymbol, k| {
        let g = MoyalGenerator::new(h, k, DerivativeScheme::Spectral, s.clone()).unwrap();
        moyal_rhs(&w, &g).unwrap()
    };
    assert!(rhs(&quad, 1).max_abs_diff(&rhs(&quad, 4)).unwrap() < 1e-12);
    let q4 = quartic(0.1);
    assert!(rhs(&q4, 2).max_abs_diff(&rhs(&q4, 4)).unwrap() < 1e-12);
    assert!(rhs(&q4, 1).max_abs_diff(&rhs(&q4, 2)).unwrap() > 1e-6);
    let g = MoyalGenerator::new(&q4, 4, DerivativeScheme::Spectral, s.clone()).unwrap();
    assert_eq!(g.derivative_tensor(&[5, 0]).iter().fold(0.0f64, |m, v| m.max(v.abs())), 0.0);
    assert!(g.derivative_tensor(&[4, 0]).iter().all(|&v| (v - 2.4).abs() < 1e-12));
    assert_eq!(g.term_count(), 3);
}

#[test]
fn quantum_correction_matches_finite_differences() {
    let s = spec1(64, 6.0, 0.5);
    let w = coherent_field(&s, 1.0, 0.5);
    let h = HamiltonianSymbol::from_terms(1, &[(&[4], &[0], 0.25)]).unwrap();
    let g1 = MoyalGenerator::new(&h, 1, DerivativeScheme::Spectral, s.clone()).unwrap();
    let g2 = MoyalGenerator::new(&h, 2, DerivativeScheme::Spectral, s.clone()).unwrap();
    let corr = &moyal_rhs(&w, &g2).unwrap().values - &moyal_rhs(&w, &g1).unwrap().values;
    let ax = s.axis();
    let mut worst: f64 = 0.0;
    for (ix, v) in corr.indexed_iter() {
        let (q, p) = (ax.lattice_position(ix[0]), ax.lattice_momentum(ix[1]));
        // 2·(1/2)³/3! · (-∂_p³W)(6q)
        let want = -0.25 * q * fd3(|pp| coherent_wigner(q, pp, 1.0, 0.5), p, 1e-2);
        worst = worst.max((v - want).abs());
    }
    assert!(worst < 1e-5, "{worst}");
    assert!(corr.iter().fold(0.0f64, |m, v| m.max(v.abs())) > 1e-3);
}

#[test]
fn finite_difference_scheme_agrees_with_spectral() {
    let s = spec1(64, 6.0, 0.5);
    let w = coherent_field(&s, 0.5, 0.0);
    let h = quartic(0.1);
    let a = moyal_rhs(&w, &MoyalGenerator::new(&h, 2, DerivativeScheme::Spectral, s.clone()).unwrap()).unwrap();
    let b =
        moyal_rhs(&w, &MoyalGenerator::new(&h, 2, DerivativeScheme::FiniteDifference4th, s.clone()).unwrap()).unwrap();
    let diff = a.max_abs_diff(&b).unwrap();
    assert!(diff < 1e-2 && diff > 0.0, "{diff}");
}

#[test]
fn rhs_conserves_mass() {
    let s = spec1(64, 6.0, 0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let w = wigner_from_density(&random_mixed_state(&system(&s), 4, 3, &mut rng).unwrap()).unwrap();
    let g = MoyalGenerator::new(&quartic(0.1), 3, DerivativeScheme::Spectral, s.clone()).unwrap();
    assert!(moyal_rhs(&w, &g).unwrap().integral().abs() < 1e-8);
}

#[test]
fn wick_formula_examples() {
    let m = GaussianMeasure::new(ndarray::arr2(&[[1.0]])).unwrap();
    let dens = |x: f64| m.density(&[x]);
    let d1 = gaussian_measure_derivative(&m, &[vec![1.0]], &[0.7]).unwrap();
    assert!((d1 + 0.7 * dens(0.7)).abs() < 1e-15);
    let d2 = gaussian_measure_derivative(&m, &[vec![1.0], vec![1.0]], &[0.0]).unwrap();
    assert!((d2 + dens(0.0)).abs() < 1e-15);
    let b = GaussianMeasure::new(ndarray::arr2(&[[0.8, 0.2], [0.2, 0.5]])).unwrap();
    assert_eq!(gaussian_measure_derivative(&b, &[vec![0.0, 0.0]], &[0.3, -0.1]).unwrap(), 0.0);
    let five = vec![vec![1.0, 0.0]; 5];
    assert!(matches!(gaussian_measure_derivative(&b, &five, &[0.0, 0.0]), Err(Error::OrderOverflow { .. })));
}

#[test]
fn wick_third_and_fourth_orders_match_finite_differences() {
    let b = GaussianMeasure::new(ndarray::arr2(&[[0.8, 0.2], [0.2, 0.5]])).unwrap();
    let x = [0.3, -0.45];
    let h1 = [1.0, 0.5];
    let f = |t: f64| b.density(&[x[0] + t * h1[0], x[1] + t * h1[1]]);
    let e = 1e-2;
    let want3 = fd3(f, 0.0, e);
    let got3 = gaussian_measure_derivative(&b, &vec![h1.to_vec(); 3], &x).unwrap();
    assert!((want3 - got3).abs() < 1e-6, "{want3} {got3}");
    let four = (f(2.0 * e) - 4.0 * f(e) + 6.0 * f(0.0) - 4.0 * f(-e) + f(-2.0 * e)) / e.powi(4);
    let got4 = gaussian_measure_derivative(&b, &vec![h1.to_vec(); 4], &x).unwrap();
    assert!((four - got4).abs() < 1e-3, "{four} {got4}");
}

#[test]
fn reference_density_is_stationary_in_the_eta_route() {
    let s = spec1(64, 6.0, 0.5);
    let g = MoyalGenerator::new(&HamiltonianSymbol::harmonic(1), 3, DerivativeScheme::Spectral, s.clone()).unwrap();
    let one = PhaseSpaceField::from_fn(s.clone(), FieldRole::EtaDensity, ReferenceMeasure::MuOtimesNu, |_, _| 1.0);
    let rhs = eta_rhs(&one, &g).unwrap();
    assert!(rhs.max_abs() < 1e-8, "{}", rhs.max_abs());
}

/// Largest route difference where `η ≥ 1e-6·max η`; below that, lattice roundoff
/// in the density route is amplified by the division.
fn route_gap(phi: &PhaseSpaceField, g: &MoyalGenerator) -> f64 {
    let direct = eta_rhs(phi, g).unwrap();
    let w = wigner_from_eta(phi).unwrap();
    let via = eta_density(&moyal_rhs(&w, g).unwrap()).unwrap();
    let eta = phaselab::field::eta_on_lattice(phi.spec());
    let floor = 1e-6 * eta.iter().cloned().fold(0.0, f64::max);
    let mut worst: f64 = 0.0;
    for ((a, b), e) in direct.values.iter().zip(via.values.iter()).zip(eta.iter()) {
        if *e >= floor {
            worst = worst.max((a - b).abs());
        }
    }
    worst
}

#[test]
fn eta_route_commutes_with_the_density_route() {
    let s = spec1(64, 7.5, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..3 {
        let c: Vec<f64> = (0..5).map(|_| rand::Rng::random_range(&mut rng, -0.5..0.5)).collect();
        let phi = PhaseSpaceField::from_fn(s.clone(), FieldRole::EtaDensity, ReferenceMeasure::MuOtimesNu, |q, p| {
            let (q, p) = (q[0], p[0]);
            (1.0 + c[0] * q + c[1] * p + c[2] * q * p + c[3] * q * q + c[4] * p * p) * (-(q * q + p * p) / 2.0).exp()
        });
        let g = MoyalGenerator::new(&HamiltonianSymbol::harmonic(1), 3, DerivativeScheme::Spectral, s.clone()).unwrap();
        let gap = route_gap(&phi, &g);
        assert!(gap < 1e-8, "{gap}");
        let g4 = MoyalGenerator::new(&quartic(0.1), 2, DerivativeScheme::Spectral, s.clone()).unwrap();
        let gap = route_gap(&phi, &g4);
        assert!(gap < 1e-6, "{gap}");
    }
}

#[test]
fn oracle_basics() {
    let s = spec1(64, 7.5, 0.5);
    let sys = system(&s);
    let t0 = prepare(&StateRecipe::Displaced { a: 1.0, p: 0.3 }, &sys).unwrap();
    let h = weyl_quantize(&HamiltonianSymbol::harmonic(1), &sys).unwrap();
    let out = von_neumann_oracle(&t0, &h, &[0.0, 2.0 * PI]).unwrap();
    assert_eq!(linalg::max_abs_diff(out[0].matrix(), t0.matrix()), 0.0);
    assert!(linalg::max_abs_diff(out[1].matrix(), t0.matrix()) < 1e-8);

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let r = phaselab::states::random_density(&sys, 3, &mut rng);
    let hq = weyl_quantize(&quartic(0.1), &sys).unwrap();
    for t in von_neumann_oracle(&r, &hq, &[0.3, 1.7, 5.0]).unwrap() {
        assert!((t.purity() - r.purity()).abs() < 1e-10);
        assert!((t.trace() - 1.0).abs() < 1e-10);
    }
}

#[test]
fn run_parameters_are_validated() {
    assert!(EvolutionRun::new(0.0, 1.0, 1).validate().is_err());
    assert!(EvolutionRun::new(1e-3, 1.0, 0).validate().is_err());
    let r = EvolutionRun::new(1e-3, 2.0 * PI, 100);
    assert_eq!(r.steps(), 6284);
    assert!((r.effective_dt() * r.steps() as f64 - 2.0 * PI).abs() < 1e-12);
    let st = r.snapshot_steps();
    assert_eq!(st[0], 0);
    assert_eq!(*st.last().unwrap(), 6284);
}

#[test]
fn free_particle_spreads_as_predicted() {
    let s = spec1(64, 6.0, 0.5);
    let h = HamiltonianSymbol::from_terms(1, &[(&[0], &[2], 0.5)]).unwrap();
    let g = MoyalGenerator::new(&h, 3, DerivativeScheme::Spectral, s.clone()).unwrap();
    let ev = evolve(&coherent_field(&s, 0.0, 0.0), &g, &EvolutionRun::new(1e-3, 1.0, 250)).unwrap();
    let ax = s.axis();
    for snap in &ev.snapshots {
        let m = snap.field.position_marginal();
        let var: f64 =
            m.iter().enumerate().map(|(a, v)| v * ax.lattice_position(a).powi(2)).sum::<f64>() * 0.5 * ax.step();
        let want = 0.5 + 0.5 * snap.t * snap.t;
        assert!((var - want).abs() < 1e-4, "t={} {var} {want}", snap.t);
    }
    let d = &ev.diagnostics;
    assert_eq!(d.len(), 1001);
    assert!((d.last().unwrap().mass - 1.0).abs() < 1e-6);
    assert!((d.last().unwrap().l2 - d[0].l2).abs() < 1e-4);
}

#[test]
fn harmonic_period_returns_the_state() {
    let s = spec1(32, 7.5, 0.5);
    let sys = system(&s);
    let t0 = prepare(&StateRecipe::Displaced { a: 1.0, p: 0.0 }, &sys).unwrap();
    let w0 = wigner_from_density(&t0).unwrap();
    let g = MoyalGenerator::new(&HamiltonianSymbol::harmonic(1), 3, DerivativeScheme::Spectral, s.clone()).unwrap();
    let run = EvolutionRun::new(1e-3, 2.0 * PI, 1000);
    let ev = evolve(&w0, &g, &run).unwrap();
    assert!(ev.last().field.max_abs_diff(&w0).unwrap() < 1e-4);
    let h = weyl_quantize(&HamiltonianSymbol::harmonic(1), &sys).unwrap();
    let oracle = von_neumann_oracle(&t0, &h, &run.snapshot_times()).unwrap();
    for (snap, t) in ev.snapshots.iter().zip(&oracle) {
        let wo = wigner_from_density(t).unwrap();
        assert!(snap.field.max_abs_diff(&wo).unwrap() < 1e-4, "t={}", snap.t);
    }
}

#[test]
fn classical_and_quantum_runs_diverge_on_a_cat_state() {
    let s = spec1(64, 7.5, 0.5);
    let sys = system(&s);
    let w0 = wigner_from_density(&prepare(&StateRecipe::Cat { a: 1.5 }, &sys).unwrap()).unwrap();
    let h = quartic(0.02);
    let run = EvolutionRun::new(5e-4, 1.0, 1000);
    let classical = evolve(&w0, &MoyalGenerator::classical(&h, s.clone()).unwrap(), &run).unwrap();
    let quantum =
        evolve(&w0, &MoyalGenerator::new(&h, 2, DerivativeScheme::Spectral, s.clone()).unwrap(), &run).unwrap();
    let gap = classical.last().field.max_abs_diff(&quantum.last().field).unwrap();
    assert!(gap > 1e-2, "{gap}");
}

#[test]
fn stability_guard_and_boundary_escape() {
    let s = spec1(32, 6.0, 0.5);
    let g = MoyalGenerator::new(&quartic(0.1), 2, DerivativeScheme::Spectral, s.clone()).unwrap();
    let w = coherent_field(&s, 0.0, 0.0);
    assert!(matches!(evolve(&w, &g, &EvolutionRun::new(1e-3, 0.01, 1)), Err(Error::CflViolation { .. })));
    let forced = evolve(&w, &g, &EvolutionRun::new(1e-3, 0.01, 1).with_cfl_override()).unwrap();
    assert_eq!(forced.warnings.len(), 1);
    let edge = coherent_field(&s, 5.0, 0.0);
    let gh = MoyalGenerator::new(&HamiltonianSymbol::harmonic(1), 1, DerivativeScheme::Spectral, s.clone()).unwrap();
    assert!(matches!(evolve(&edge, &gh, &EvolutionRun::new(1e-3, 0.01, 1)), Err(Error::BoundaryEscape { .. })));
}

#[test]
fn scheduled_symbol_follows_the_oracle() {
    let s = spec1(32, 7.5, 0.5);
    let sys = system(&s);
    let h = HamiltonianSymbol::harmonic(1)
        .with_schedule(vec![
            ScheduleSegment { start: 0.0, coeffs: vec![0.5, 0.5] },
            ScheduleSegment { start: 0.5, coeffs: vec![1.0, 0.5] },
        ])
        .unwrap();
    let t0 = prepare(&StateRecipe::Displaced { a: 1.0, p: 0.0 }, &sys).unwrap();
    let w0 = wigner_from_density(&t0).unwrap();
    let run = EvolutionRun::new(1e-3, 1.0, 500);
    let g = MoyalGenerator::new(&h, 3, DerivativeScheme::Spectral, s.clone()).unwrap();
    let ev = evolve(&w0, &g, &run).unwrap();
    let oracle = oracle_for_symbol(&t0, &h, &run.snapshot_times()).unwrap();
    for (snap, t) in ev.snapshots.iter().zip(&oracle) {
        let wo = wigner_from_density(t).unwrap();
        assert!(snap.field.max_abs_diff(&wo).unwrap() < 1e-4, "t={}", snap.t);
    }
    // the second segment is stiffer in q, so the energy jumps at the switch
    let e = &ev.diagnostics;
    assert!((e[501].energy - e[499].energy).abs() > 0.1);
}

#[test]
fn eta_evolution_tracks_the_density_evolution() {
    let s = spec1(64, 7.5, 1.0);
    let eta = phaselab::field::eta_on_lattice(&s);
    let phi0 = PhaseSpaceField::from_fn(s.clone(), FieldRole::EtaDensity, ReferenceMeasure::MuOtimesNu, |q, p| {
        let x = [q[0], p[0]];
        coherent_wigner(q[0], p[0], 0.8, -0.3) / s.eta.density(&x)
    });
    let w0 = wigner_from_eta(&phi0).unwrap();
    let g = MoyalGenerator::new(&HamiltonianSymbol::harmonic(1), 3, DerivativeScheme::Spectral, s.clone()).unwrap();
    let run = EvolutionRun::new(1e-3, 1.0, 250);
    let ew = evolve(&w0, &g, &run).unwrap();
    let ephi = evolve(&phi0, &g, &run).unwrap();
    let floor = 1e-6 * eta.iter().cloned().fold(0.0, f64::max);
    for (a, b) in ew.snapshots.iter().zip(&ephi.snapshots) {
        let mut worst: f64 = 0.0;
        for ((w, phi), e) in a.field.values.iter().zip(b.field.values.iter()).zip(eta.iter()) {
            if *e >= floor {
                worst = worst.max((w / e - phi).abs());
            }
        }
        assert!(worst < 1e-7, "t={} {worst}", a.t);
    }
}
