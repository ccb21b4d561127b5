#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{arr2, Array2};
use phaselab::field::{FieldRole, PhaseSpaceField, ReferenceMeasure};
use phaselab::hilbert::CompositeSystem;
use phaselab::lattice::{make_phase_space, PhaseSpaceSpec};

pub fn spec1(n: usize, l: f64, b: f64) -> Arc<PhaseSpaceSpec> {
    make_phase_space(1, n, l, arr2(&[[b]])).unwrap()
}

pub fn spec_d(d: usize, n: usize, l: f64, b: f64) -> Arc<PhaseSpaceSpec> {
    make_phase_space(d, n, l, Array2::eye(d) * b).unwrap()
}

pub fn system(spec: &Arc<PhaseSpaceSpec>) -> Arc<CompositeSystem> {
    CompositeSystem::single(spec.clone())
}

/// Wigner density of a coherent state centered at `(q0, p0)`.
pub fn coherent_wigner(q: f64, p: f64, q0: f64, p0: f64) -> f64 {
    (-(q - q0).powi(2) - (p - p0).powi(2)).exp() / PI
}

pub fn coherent_field(spec: &Arc<PhaseSpaceSpec>, q0: f64, p0: f64) -> PhaseSpaceField {
    PhaseSpaceField::from_fn(spec.clone(), FieldRole::WignerMeasureDensity, ReferenceMeasure::Lebesgue, |q, p| {
        coherent_wigner(q[0], p[0], q0, p0)
    })
}

pub fn max_abs_diff(a: &ndarray::ArrayD<f64>, b: &ndarray::ArrayD<f64>) -> f64 {
    a.iter().zip(b.iter()).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}
