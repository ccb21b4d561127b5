//! FFT plumbing over n-dimensional arrays and the band-limited half-step
//! interpolation used by the Wigner transform.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{Array2, ArrayD, Axis, IxDyn, Zip};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

pub type C64 = Complex64;

fn inverse_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

/// Apply `f` to every lane of `arr` along `axis`, producing lanes of length `out_len`.
pub fn map_lanes<T, U, F>(arr: &ArrayD<T>, axis: usize, out_len: usize, f: F) -> ArrayD<U>
where
    T: Copy + Send + Sync,
    U: Copy + Send + Sync + Default,
    F: Fn(&[T], &mut [U]) + Sync,
{
    let nd = arr.ndim();
    let mut perm: Vec<usize> = (0..nd).filter(|&k| k != axis).collect();
    perm.push(axis);
    let view = arr.view().permuted_axes(IxDyn(&perm));
    let src = view.as_standard_layout();
    let src = src.as_slice().expect("standard layout");
    let len = arr.shape()[axis];
    let batch = src.len().checked_div(len).unwrap_or(0);
    let mut out = vec![U::default(); batch * out_len];
    out.par_chunks_mut(out_len.max(1)).zip(src.par_chunks(len.max(1))).for_each(|(o, i)| f(i, o));
    let mut shape: Vec<usize> = perm[..nd - 1].iter().map(|&k| arr.shape()[k]).collect();
    shape.push(out_len);
    let res = ArrayD::from_shape_vec(IxDyn(&shape), out).expect("shape");
    res.permuted_axes(IxDyn(&inverse_permutation(&perm))).as_standard_layout().into_owned()
}

/// Apply `f` to every 2-d slice spanned by `(ax1, ax2)`; slices are passed row-major.
pub fn map_axis_pair<T, U, F>(arr: &ArrayD<T>, ax1: usize, ax2: usize, out_shape: (usize, usize), f: F) -> ArrayD<U>
where
    T: Copy + Send + Sync,
    U: Copy + Send + Sync + Default,
    F: Fn(&[T], &mut [U]) + Sync,
{
    let nd = arr.ndim();
    let mut perm: Vec<usize> = (0..nd).filter(|&k| k != ax1 && k != ax2).collect();
    perm.push(ax1);
    perm.push(ax2);
    let view = arr.view().permuted_axes(IxDyn(&perm));
    let src = view.as_standard_layout();
    let src = src.as_slice().expect("standard layout");
    let in_len = arr.shape()[ax1] * arr.shape()[ax2];
    let out_len = out_shape.0 * out_shape.1;
    let batch = src.len() / in_len;
    let mut out = vec![U::default(); batch * out_len];
    out.par_chunks_mut(out_len).zip(src.par_chunks(in_len)).for_each(|(o, i)| f(i, o));
    let mut shape: Vec<usize> = perm[..nd - 2].iter().map(|&k| arr.shape()[k]).collect();
    shape.push(out_shape.0);
    shape.push(out_shape.1);
    let res = ArrayD::from_shape_vec(IxDyn(&shape), out).expect("shape");
    res.permuted_axes(IxDyn(&inverse_permutation(&perm))).as_standard_layout().into_owned()
}

/// Unnormalized DFT along one axis (`inverse` flips the exponent sign only).
pub fn fft_axis(arr: &ArrayD<C64>, axis: usize, inverse: bool) -> ArrayD<C64> {
    let len = arr.shape()[axis];
    let mut planner = FftPlanner::<f64>::new();
    let fft = if inverse { planner.plan_fft_inverse(len) } else { planner.plan_fft_forward(len) };
    map_lanes(arr, axis, len, |src, dst| {
        dst.copy_from_slice(src);
        fft.process(dst);
    })
}

/// Unnormalized DFT over every axis.
pub fn fft_all(arr: &ArrayD<C64>, inverse: bool) -> ArrayD<C64> {
    let mut out = arr.clone();
    for ax in 0..arr.ndim() {
        out = fft_axis(&out, ax, inverse);
    }
    out
}

/// Cached plans for repeated in-place transforms of arrays whose axes all have length `len`.
pub struct CubeFft {
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl CubeFft {
    pub fn new(len: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self { len, forward: planner.plan_fft_forward(len), inverse: planner.plan_fft_inverse(len) }
    }

    /// Unnormalized DFT of one lane, in place.
    pub fn process(&self, buf: &mut [C64], inverse: bool) {
        if inverse {
            self.inverse.process(buf);
        } else {
            self.forward.process(buf);
        }
    }

    /// Unnormalized DFT over every axis, in place.
    pub fn transform(&self, arr: &mut ArrayD<C64>, inverse: bool) {
        let plan = if inverse { &self.inverse } else { &self.forward };
        for ax in 0..arr.ndim() {
            debug_assert_eq!(arr.shape()[ax], self.len);
            Zip::from(arr.lanes_mut(Axis(ax))).par_for_each(|mut lane| {
                let mut buf: Vec<C64> = lane.iter().copied().collect();
                plan.process(&mut buf);
                lane.iter_mut().zip(buf).for_each(|(d, s)| *d = s);
            });
        }
    }
}

/// Angular wavenumbers of a periodic axis in FFT order; the Nyquist slot is negative.
pub fn wavenumbers(len: usize, spacing: f64) -> Vec<f64> {
    let period = len as f64 * spacing;
    (0..len)
        .map(|j| {
            let m = if j < len / 2 { j as f64 } else { j as f64 - len as f64 };
            2.0 * PI * m / period
        })
        .collect()
}

/// Real `2n × n` matrix mapping samples on `x_j = jh` to the half-step grid `y_a = a·h/2`.
///
/// Trigonometric interpolation with the Nyquist mode carried by
/// `cos(πx/h) + sin(πx/h)`, which keeps `Fᵀ F = 2I` and `F[2j, ·] = e_j`.
pub fn interpolation_matrix(n: usize) -> Array2<f64> {
    let nf = n as f64;
    let half = (n / 2) as i64;
    Array2::from_shape_fn((2 * n, n), |(a, j)| {
        let x = a as f64 / 2.0 - j as f64;
        let mut acc = 0.0;
        for k in (1 - half)..half {
            acc += (2.0 * PI * k as f64 * x / nf).cos();
        }
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        let t = PI * a as f64 / 2.0;
        acc += sign * (t.cos() + t.sin());
        acc / nf
    })
}

/// Unitary DFT matrix `U[k, j] = e^{-2πi kj/n}/√n`.
pub fn unitary_dft(n: usize) -> Array2<C64> {
    let s = 1.0 / (n as f64).sqrt();
    Array2::from_shape_fn((n, n), |(k, j)| {
        let ph = -2.0 * PI * ((k * j) % n) as f64 / n as f64;
        C64::from_polar(s, ph)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array1, ArrayD};

    #[test]
    fn interpolation_is_isometric_up_to_two() {
        for &n in &[4usize, 8, 16, 64] {
            let f = interpolation_matrix(n);
            let g = f.t().dot(&f);
            for i in 0..n {
                for j in 0..n {
                    let want = if i == j { 2.0 } else { 0.0 };
                    assert!((g[[i, j]] - want).abs() < 1e-12, "n={n} ({i},{j}) {}", g[[i, j]]);
                }
            }
            for j in 0..n {
                for l in 0..n {
                    let want = if j == l { 1.0 } else { 0.0 };
                    assert!((f[[2 * j, l]] - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn interpolation_reproduces_smooth_functions() {
        let n = 64;
        let l = 8.0;
        let h = 2.0 * l / n as f64;
        let samples = Array1::from_shape_fn(n, |j| {
            let x = -l + j as f64 * h;
            (-x * x / 2.0).exp()
        });
        let fine = interpolation_matrix(n).dot(&samples);
        for a in 0..2 * n {
            let y = -l + a as f64 * h / 2.0;
            assert!((fine[a] - (-y * y / 2.0).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn fft_round_trip() {
        let arr = ArrayD::from_shape_fn(IxDyn(&[4, 8, 2]), |ix| {
            C64::new(ix[0] as f64 + 0.3 * ix[1] as f64, ix[2] as f64 - 0.1)
        });
        let back = fft_all(&fft_all(&arr, false), true).mapv(|v| v / 64.0);
        for (a, b) in arr.iter().zip(back.iter()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn cube_fft_matches_fft_all() {
        let arr =
            ArrayD::from_shape_fn(IxDyn(&[8, 8, 8]), |ix| C64::new((ix[0] * 3 + ix[1]) as f64, ix[2] as f64 * 0.2));
        let mut a = arr.clone();
        CubeFft::new(8).transform(&mut a, false);
        let b = fft_all(&arr, false);
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).norm() < 1e-10);
        }
    }

    #[test]
    fn fft_axis_matches_direct_sum() {
        let arr = ArrayD::from_shape_fn(IxDyn(&[3, 8]), |ix| C64::new((ix[0] * 8 + ix[1]) as f64, 0.5));
        let out = fft_axis(&arr, 1, false);
        for r in 0..3 {
            for k in 0..8 {
                let want: C64 =
                    (0..8).map(|j| arr[[r, j].as_ref()] * C64::from_polar(1.0, -2.0 * PI * (k * j) as f64 / 8.0)).sum();
                assert!((out[[r, k].as_ref()] - want).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn unitary_dft_is_unitary() {
        let u = unitary_dft(16);
        let g = u.t().mapv(|v| v.conj()).dot(&u);
        for i in 0..16 {
            for j in 0..16 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g[[i, j]] - C64::new(want, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn wavenumbers_have_negative_nyquist() {
        let k = wavenumbers(8, 0.5);
        assert!((k[1] - 2.0 * PI / 4.0).abs() < 1e-15);
        assert!((k[4] + PI / 0.5).abs() < 1e-12);
    }
}
