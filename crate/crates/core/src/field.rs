//! Scalar fields on the phase lattice and its Fourier dual.
//!
//! Each position axis of `n` points becomes a lattice axis of `2n` points
//! `y_a = -L + a·h/2`, and each momentum axis carries `2n` points
//! `p_m = (m - n)·π/(2L)`. Field arrays have `2d` axes ordered
//! `[q_1..q_d, p_1..p_d]`.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{ArrayD, Dimension, IxDyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::C64;
use crate::lattice::PhaseSpaceSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldRole {
    WignerMeasureDensity,
    EtaDensity,
    Symbol,
    WeylFunctionSamples,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceMeasure {
    Lebesgue,
    MuOtimesNu,
}

pub fn lattice_shape(spec: &PhaseSpaceSpec) -> Vec<usize> {
    vec![2 * spec.n(); 2 * spec.d()]
}

/// Phase-space coordinates `(q, p)` of a lattice multi-index.
pub fn lattice_point(spec: &PhaseSpaceSpec, ix: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let d = spec.d();
    let ax = spec.axis();
    let q = (0..d).map(|t| ax.lattice_position(ix[t])).collect();
    let p = (0..d).map(|t| ax.lattice_momentum(ix[d + t])).collect();
    (q, p)
}

/// Samples `f(q, p)` on the phase lattice.
pub fn sample_lattice(spec: &PhaseSpaceSpec, f: impl Fn(&[f64], &[f64]) -> f64 + Sync) -> ArrayD<f64> {
    let shape = lattice_shape(spec);
    let d = spec.d();
    let ax = spec.axis();
    let len: usize = shape.iter().product();
    let side = 2 * spec.n();
    let mut values = vec![0.0; len];
    use rayon::prelude::*;
    values.par_chunks_mut(side).enumerate().for_each(|(row, out)| {
        let mut ix = vec![0usize; 2 * d];
        let mut rem = row;
        for k in (0..2 * d - 1).rev() {
            ix[k] = rem % side;
            rem /= side;
        }
        let mut q = vec![0.0; d];
        let mut p = vec![0.0; d];
        for t in 0..d {
            q[t] = ax.lattice_position(ix[t]);
        }
        for t in 0..d - 1 {
            p[t] = ax.lattice_momentum(ix[d + t]);
        }
        for (m, o) in out.iter_mut().enumerate() {
            p[d - 1] = ax.lattice_momentum(m);
            *o = f(&q, &p);
        }
    });
    ArrayD::from_shape_vec(IxDyn(&shape), values).expect("lattice shape")
}

/// `μ⊗ν` density on the phase lattice.
pub fn eta_on_lattice(spec: &PhaseSpaceSpec) -> ArrayD<f64> {
    sample_lattice(spec, |q, p| {
        let mut x = q.to_vec();
        x.extend_from_slice(p);
        spec.eta.density(&x)
    })
}

/// Real field on the phase lattice.
#[derive(Clone, Debug)]
pub struct PhaseSpaceField {
    pub values: ArrayD<f64>,
    pub role: FieldRole,
    pub reference: ReferenceMeasure,
    spec: Arc<PhaseSpaceSpec>,
}

impl PhaseSpaceField {
    pub fn new(
        values: ArrayD<f64>,
        role: FieldRole,
        reference: ReferenceMeasure,
        spec: Arc<PhaseSpaceSpec>,
    ) -> Result<Self> {
        if values.shape() != lattice_shape(&spec).as_slice() {
            return Err(Error::GridMismatch(format!(
                "field shape {:?} does not match lattice {:?}",
                values.shape(),
                lattice_shape(&spec)
            )));
        }
        Ok(Self { values, role, reference, spec })
    }

    pub fn from_fn(
        spec: Arc<PhaseSpaceSpec>,
        role: FieldRole,
        reference: ReferenceMeasure,
        f: impl Fn(&[f64], &[f64]) -> f64 + Sync,
    ) -> Self {
        let values = sample_lattice(&spec, f);
        Self { values, role, reference, spec }
    }

    pub fn spec(&self) -> &Arc<PhaseSpaceSpec> {
        &self.spec
    }

    pub fn cell(&self) -> f64 {
        self.spec.grid.phase_cell()
    }

    pub fn with_values(&self, values: ArrayD<f64>) -> Self {
        Self { values, ..self.clone() }
    }

    pub fn same_lattice(&self, other: &PhaseSpaceField) -> Result<()> {
        if self.spec.params() != other.spec.params() {
            return Err(Error::GridMismatch("fields live on different lattices".into()));
        }
        Ok(())
    }

    /// Lebesgue quadrature `Σ f · cell`.
    pub fn integral(&self) -> f64 {
        self.values.sum() * self.cell()
    }

    /// Quadrature against the `μ⊗ν` density.
    pub fn integral_against_eta(&self) -> f64 {
        let eta = eta_on_lattice(&self.spec);
        self.values.iter().zip(eta.iter()).map(|(a, b)| a * b).sum::<f64>() * self.cell()
    }

    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * self.cell()).sqrt()
    }

    /// `(2π)^d ∫ W²`, equal to `tr T²` for a Wigner density.
    pub fn purity(&self) -> f64 {
        (2.0 * PI).powi(self.spec.d() as i32) * self.l2_norm().powi(2)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &PhaseSpaceField) -> Result<f64> {
        self.same_lattice(other)?;
        Ok(self.values.iter().zip(other.values.iter()).fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    /// Marginal over all momentum axes, on the lattice positions `y_a`.
    pub fn position_marginal(&self) -> ArrayD<f64> {
        let d = self.spec.d();
        let mut acc = self.values.clone();
        for _ in 0..d {
            acc = acc.sum_axis(ndarray::Axis(acc.ndim() - 1));
        }
        acc * self.spec.axis().lattice_momentum_step().powi(d as i32)
    }

    /// Marginal over all position axes, on the lattice momenta `p_m`.
    pub fn momentum_marginal(&self) -> ArrayD<f64> {
        let d = self.spec.d();
        let mut acc = self.values.clone();
        for _ in 0..d {
            acc = acc.sum_axis(ndarray::Axis(0));
        }
        acc * (0.5 * self.spec.axis().step()).powi(d as i32)
    }

    /// Mass in the outermost lattice layer along any axis.
    pub fn boundary_mass(&self) -> f64 {
        let last = 2 * self.spec.n() - 1;
        let mut acc = 0.0;
        for (ix, v) in self.values.indexed_iter() {
            if ix.slice().iter().any(|&k| k == 0 || k == last) {
                acc += v.abs();
            }
        }
        acc * self.cell()
    }
}

/// Complex samples on the dual lattice `q2_k = (k - n)h`, `p2_j = (j - n)π/L`.
#[derive(Clone, Debug)]
pub struct DualField {
    pub values: ArrayD<C64>,
    spec: Arc<PhaseSpaceSpec>,
}

impl DualField {
    pub fn new(values: ArrayD<C64>, spec: Arc<PhaseSpaceSpec>) -> Result<Self> {
        if values.shape() != lattice_shape(&spec).as_slice() {
            return Err(Error::GridMismatch(format!(
                "dual field shape {:?} does not match lattice {:?}",
                values.shape(),
                lattice_shape(&spec)
            )));
        }
        Ok(Self { values, spec })
    }

    pub fn spec(&self) -> &Arc<PhaseSpaceSpec> {
        &self.spec
    }

    /// `(q2, p2)` coordinates of a dual multi-index.
    pub fn point(&self, ix: &[usize]) -> (Vec<f64>, Vec<f64>) {
        let d = self.spec.d();
        let ax = self.spec.axis();
        let q = (0..d).map(|t| ax.dual_position(ix[t])).collect();
        let p = (0..d).map(|t| ax.dual_momentum(ix[d + t])).collect();
        (q, p)
    }

    /// Multi-index of the origin `(0, 0)`.
    pub fn origin(&self) -> Vec<usize> {
        vec![self.spec.n(); 2 * self.spec.d()]
    }
}
