//! Discretized phase spaces and Gaussian reference measures.
//!
//! A [`PhaseSpaceSpec`] fixes the configuration space `Q = R^d` on a uniform
//! periodic grid of `n` points per axis spanning `[-L, L)`, together with the
//! covariance `B` of the reference measure `μ` on `Q`. The momentum-side
//! measure `ν` uses the same `B`, and `μ⊗ν` is the reference measure on the
//! phase space `Q × P`.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{Array1, Array2};
use ndarray_linalg::{Eigh, UPLO};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Numerical thresholds shared by the constructors and validators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TolerancePolicy {
    /// Relative asymmetry allowed in a covariance matrix.
    pub covariance_symmetry: f64,
    /// Largest Gaussian mass allowed outside the position (and momentum) grid.
    pub tail_mass: f64,
    /// Max-abs deviation of `T - T†` accepted (and projected away).
    pub hermitian: f64,
    /// Allowed deviation of a density operator's trace from one.
    pub trace: f64,
    /// Most negative eigenvalue accepted for a density operator.
    pub psd_floor: f64,
    /// Allowed deviation of a state's squared norm from one.
    pub state_norm: f64,
    /// Reference densities below this value are treated as underflow.
    pub underflow_floor: f64,
}

impl Default for TolerancePolicy {
    fn default() -> Self {
        Self {
            covariance_symmetry: 1e-12,
            tail_mass: 1e-12,
            hermitian: 1e-10,
            trace: 1e-8,
            psd_floor: 1e-8,
            state_norm: 1e-10,
            underflow_floor: 1e-300,
        }
    }
}

/// One uniform periodic position axis `x_i = -L + i·h`, `h = 2L/n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub n: usize,
    pub half_width: f64,
}

impl Axis {
    pub fn new(n: usize, half_width: f64) -> Result<Self> {
        if n < 4 || !n.is_power_of_two() {
            return Err(Error::BadGridSize(format!("points per axis must be a power of two >= 4, got {n}")));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::BadGridSize(format!("half width must be positive, got {half_width}")));
        }
        Ok(Self { n, half_width })
    }

    /// Position spacing `h`.
    pub fn step(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    pub fn position(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.step()
    }

    pub fn positions(&self) -> Array1<f64> {
        Array1::from_shape_fn(self.n, |i| self.position(i))
    }

    /// Momentum spacing of the discrete-Fourier dual grid, `π/L`.
    pub fn momentum_step(&self) -> f64 {
        PI / self.half_width
    }

    /// Centered momentum grid `k_j = (j - n/2)·π/L`.
    pub fn momenta(&self) -> Array1<f64> {
        let dk = self.momentum_step();
        Array1::from_shape_fn(self.n, |j| (j as f64 - (self.n / 2) as f64) * dk)
    }

    /// Momenta in FFT storage order; the Nyquist entry carries `-π/h`.
    pub fn fft_momenta(&self) -> Array1<f64> {
        let n = self.n as isize;
        let dk = self.momentum_step();
        Array1::from_shape_fn(self.n, |j| {
            let j = j as isize;
            let m = if j < n / 2 { j } else { j - n };
            m as f64 * dk
        })
    }

    /// Largest momentum magnitude resolved by the grid, `π/h`.
    pub fn momentum_half_range(&self) -> f64 {
        PI / self.step()
    }

    /// Number of points per phase-lattice axis (the half-step interleaved grid).
    pub fn lattice_len(&self) -> usize {
        2 * self.n
    }

    /// Phase-lattice position `y_a = -L + a·h/2`.
    pub fn lattice_position(&self, a: usize) -> f64 {
        -self.half_width + a as f64 * 0.5 * self.step()
    }

    /// Phase-lattice momentum spacing `π/(2L)`.
    pub fn lattice_momentum_step(&self) -> f64 {
        PI / (2.0 * self.half_width)
    }

    /// Phase-lattice momentum `p_m = (m - n)·π/(2L)`.
    pub fn lattice_momentum(&self, m: usize) -> f64 {
        (m as f64 - self.n as f64) * self.lattice_momentum_step()
    }

    /// Phase-space cell of one lattice axis, `(h/2)·π/(2L) = π/(2n)`.
    pub fn lattice_cell(&self) -> f64 {
        0.5 * self.step() * self.lattice_momentum_step()
    }

    /// Dual-lattice position `q2_k = (k - n)·h` (conjugate to lattice momentum).
    pub fn dual_position(&self, k: usize) -> f64 {
        (k as f64 - self.n as f64) * self.step()
    }

    /// Dual-lattice momentum `p2_j = (j - n)·π/L` (conjugate to lattice position).
    pub fn dual_momentum(&self, j: usize) -> f64 {
        (j as f64 - self.n as f64) * self.momentum_step()
    }
}

/// Position and momentum grids of a `d`-dimensional configuration space.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub d: usize,
    pub axis: Axis,
}

impl Grid {
    pub fn len(&self) -> usize {
        self.axis.n.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Quadrature weight of one position cell, `h^d`.
    pub fn position_cell(&self) -> f64 {
        self.axis.step().powi(self.d as i32)
    }

    /// Quadrature weight of one momentum cell, `(π/L)^d`.
    pub fn momentum_cell(&self) -> f64 {
        self.axis.momentum_step().powi(self.d as i32)
    }

    /// Quadrature weight of one cell of the `2d`-dimensional phase lattice.
    pub fn phase_cell(&self) -> f64 {
        self.axis.lattice_cell().powi(self.d as i32)
    }

    /// Coordinates of flat grid point `index` (row-major, first axis slowest).
    pub fn point(&self, index: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.d];
        let mut rem = index;
        for t in (0..self.d).rev() {
            out[t] = self.axis.position(rem % self.axis.n);
            rem /= self.axis.n;
        }
        out
    }

    /// Momentum coordinates of flat index `index` on the centered momentum grid.
    pub fn momentum_point(&self, index: usize) -> Vec<f64> {
        let k = self.axis.momenta();
        let mut out = vec![0.0; self.d];
        let mut rem = index;
        for t in (0..self.d).rev() {
            out[t] = k[rem % self.axis.n];
            rem /= self.axis.n;
        }
        out
    }
}

/// Centered Gaussian measure with explicit normalization.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianMeasure {
    pub dim: usize,
    pub covariance: Array2<f64>,
    pub precision: Array2<f64>,
    pub log_norm: f64,
}

impl GaussianMeasure {
    pub fn new(covariance: Array2<f64>) -> Result<Self> {
        let dim = covariance.nrows();
        if dim == 0 || covariance.ncols() != dim {
            return Err(Error::BadGridSize("covariance must be a non-empty square matrix".into()));
        }
        let (vals, vecs) = covariance.eigh(UPLO::Lower)?;
        let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(min > 0.0) {
            return Err(Error::NonPositiveCovariance { min_eigenvalue: min });
        }
        let inv = Array2::from_diag(&vals.mapv(|v| 1.0 / v));
        let precision = vecs.dot(&inv).dot(&vecs.t());
        let log_det: f64 = vals.iter().map(|v| v.ln()).sum();
        let log_norm = -0.5 * (dim as f64) * (2.0 * PI).ln() - 0.5 * log_det;
        Ok(Self { dim, covariance, precision, log_norm })
    }

    /// Block-diagonal product measure.
    pub fn product(&self, other: &GaussianMeasure) -> Result<Self> {
        let d = self.dim + other.dim;
        let mut cov = Array2::zeros((d, d));
        cov.slice_mut(ndarray::s![..self.dim, ..self.dim]).assign(&self.covariance);
        cov.slice_mut(ndarray::s![self.dim.., self.dim..]).assign(&other.covariance);
        Self::new(cov)
    }

    /// `⟨B⁻¹x, x⟩`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let row = |i: usize| -> f64 { x.iter().enumerate().map(|(j, xj)| self.precision[[i, j]] * xj).sum() };
        x.iter().take(self.dim).enumerate().map(|(i, xi)| xi * row(i)).sum()
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        self.log_norm - 0.5 * self.quadratic_form(x)
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        self.log_density(x).exp()
    }

    /// `B⁻¹x`.
    pub fn precision_apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim).map(|i| (0..self.dim).map(|j| self.precision[[i, j]] * x[j]).sum()).collect()
    }

    /// Union bound on the mass outside the box `[-r, r]^dim`.
    pub fn tail_mass_outside(&self, r: f64) -> f64 {
        (0..self.dim).map(|t| libm::erfc(r / (2.0 * self.covariance[[t, t]]).sqrt())).sum()
    }

    /// Fourier transform `exp(-½⟨p, B p⟩)`.
    pub fn characteristic(&self, p: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                acc += p[i] * self.covariance[[i, j]] * p[j];
            }
        }
        (-0.5 * acc).exp()
    }
}

/// Validated configuration space with its grids and reference measures.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseSpaceSpec {
    pub grid: Grid,
    /// `μ` on `Q`.
    pub mu: GaussianMeasure,
    /// `ν` on `P`, same covariance as `μ`.
    pub nu: GaussianMeasure,
    /// `μ⊗ν` on `Q × P`, coordinates ordered `(q, p)`.
    pub eta: GaussianMeasure,
    pub policy: TolerancePolicy,
}

/// Serializable constructor arguments of a [`PhaseSpaceSpec`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpaceParams {
    pub d: usize,
    pub n: usize,
    pub half_width: f64,
    pub covariance: Vec<Vec<f64>>,
}

impl PhaseSpaceSpec {
    pub fn d(&self) -> usize {
        self.grid.d
    }

    pub fn n(&self) -> usize {
        self.grid.axis.n
    }

    pub fn half_width(&self) -> f64 {
        self.grid.axis.half_width
    }

    pub fn axis(&self) -> Axis {
        self.grid.axis
    }

    /// Hilbert-space dimension `n^d`.
    pub fn dim(&self) -> usize {
        self.grid.len()
    }

    pub fn covariance(&self) -> &Array2<f64> {
        &self.mu.covariance
    }

    pub fn params(&self) -> PhaseSpaceParams {
        PhaseSpaceParams {
            d: self.d(),
            n: self.n(),
            half_width: self.half_width(),
            covariance: self.mu.covariance.outer_iter().map(|r| r.to_vec()).collect(),
        }
    }

    /// `μ` density sampled on the position grid (row-major).
    pub fn mu_on_grid(&self) -> Array1<f64> {
        Array1::from_shape_fn(self.dim(), |i| self.mu.density(&self.grid.point(i)))
    }

    /// `ν` density sampled on the centered momentum grid.
    pub fn nu_on_momentum_grid(&self) -> Array1<f64> {
        Array1::from_shape_fn(self.dim(), |i| self.nu.density(&self.grid.momentum_point(i)))
    }

    pub fn quadrature_mu(&self) -> f64 {
        self.mu_on_grid().sum() * self.grid.position_cell()
    }

    pub fn quadrature_nu(&self) -> f64 {
        self.nu_on_momentum_grid().sum() * self.grid.momentum_cell()
    }

    /// Quadrature of `μ⊗ν` over position grid × momentum grid.
    pub fn quadrature_eta(&self) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                let mut x = self.grid.point(i);
                x.extend(self.grid.momentum_point(j));
                acc += self.eta.density(&x);
            }
        }
        acc * self.grid.position_cell() * self.grid.momentum_cell()
    }
}

/// Validate and build a phase space with the default tolerance policy.
pub fn make_phase_space(d: usize, n: usize, half_width: f64, covariance: Array2<f64>) -> Result<Arc<PhaseSpaceSpec>> {
    make_phase_space_with(d, n, half_width, covariance, TolerancePolicy::default())
}

pub fn make_phase_space_from(params: &PhaseSpaceParams) -> Result<Arc<PhaseSpaceSpec>> {
    let d = params.d;
    if params.covariance.len() != d || params.covariance.iter().any(|r| r.len() != d) {
        return Err(Error::BadGridSize(format!("covariance must be {d}x{d}")));
    }
    let cov = Array2::from_shape_fn((d, d), |(i, j)| params.covariance[i][j]);
    make_phase_space(d, params.n, params.half_width, cov)
}

pub fn make_phase_space_with(
    d: usize,
    n: usize,
    half_width: f64,
    covariance: Array2<f64>,
    policy: TolerancePolicy,
) -> Result<Arc<PhaseSpaceSpec>> {
    if d == 0 {
        return Err(Error::BadGridSize("d must be at least 1".into()));
    }
    let axis = Axis::new(n, half_width)?;
    if covariance.dim() != (d, d) {
        return Err(Error::BadGridSize(format!("covariance is {:?}, expected {d}x{d}", covariance.dim())));
    }
    let scale = covariance.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let asym = (0..d)
        .flat_map(|i| (0..d).map(move |j| (i, j)))
        .map(|(i, j)| (covariance[[i, j]] - covariance[[j, i]]).abs())
        .fold(0.0f64, f64::max);
    let rel = if scale > 0.0 { asym / scale } else { asym };
    if rel > policy.covariance_symmetry {
        return Err(Error::NonSymmetricCovariance { asymmetry: rel });
    }
    let sym = (&covariance + &covariance.t()) * 0.5;
    let mu = GaussianMeasure::new(sym.clone())?;
    let nu = GaussianMeasure::new(sym)?;
    let eta = mu.product(&nu)?;

    let q_tail = mu.tail_mass_outside(axis.half_width);
    if q_tail >= policy.tail_mass {
        return Err(Error::InsufficientDomain { side: "position", mass: q_tail, limit: policy.tail_mass });
    }
    let p_tail = nu.tail_mass_outside(axis.momentum_half_range());
    if p_tail >= policy.tail_mass {
        return Err(Error::InsufficientDomain { side: "momentum", mass: p_tail, limit: policy.tail_mass });
    }
    Ok(Arc::new(PhaseSpaceSpec { grid: Grid { d, axis }, mu, nu, eta, policy }))
}

/// Normalized density of `measure` at `point`.
pub fn gaussian_density(measure: &GaussianMeasure, point: &[f64]) -> f64 {
    measure.density(point)
}
