//! Dense complex linear algebra helpers.

use ndarray::{Array1, Array2, ArrayView2, IxDyn, ShapeBuilder};
use ndarray_linalg::{EigValsh, Eigh, UPLO};

use crate::error::Result;
use crate::fourier::C64;

pub fn dagger(a: &Array2<C64>) -> Array2<C64> {
    a.t().mapv(|v| v.conj())
}

pub fn identity(n: usize) -> Array2<C64> {
    Array2::from_diag_elem(n, C64::new(1.0, 0.0))
}

pub fn kron(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = Array2::zeros((ar * br, ac * bc));
    for i in 0..ar {
        for j in 0..ac {
            let s = a[[i, j]];
            if s == C64::new(0.0, 0.0) {
                continue;
            }
            let mut block = out.slice_mut(ndarray::s![i * br..(i + 1) * br, j * bc..(j + 1) * bc]);
            block.zip_mut_with(b, |o, &v| *o = s * v);
        }
    }
    out
}

pub fn kron_all(ops: &[Array2<C64>]) -> Array2<C64> {
    let mut acc = Array2::from_elem((1, 1), C64::new(1.0, 0.0));
    for op in ops {
        acc = kron(&acc, op);
    }
    acc
}

pub fn trace(a: &Array2<C64>) -> C64 {
    a.diag().sum()
}

/// `tr(A B)` without forming the product.
pub fn trace_product(a: &Array2<C64>, b: &Array2<C64>) -> C64 {
    let n = a.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for k in 0..a.ncols() {
            acc += a[[i, k]] * b[[k, i]];
        }
    }
    acc
}

pub fn frobenius(a: &Array2<C64>) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs(a: &Array2<C64>) -> f64 {
    a.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

pub fn max_abs_diff(a: &Array2<C64>, b: &Array2<C64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Max-abs entry of `A - A†`.
pub fn hermitian_deviation(a: &Array2<C64>) -> f64 {
    let n = a.nrows();
    let mut dev = 0.0f64;
    for i in 0..n {
        for j in i..n {
            dev = dev.max((a[[i, j]] - a[[j, i]].conj()).norm());
        }
    }
    dev
}

pub fn symmetrize(a: &Array2<C64>) -> Array2<C64> {
    (a + &dagger(a)).mapv(|v| v * 0.5)
}

/// Eigendecomposition `a = V diag(λ) V†` of a Hermitian matrix.
pub fn eigh(a: &Array2<C64>) -> Result<(Array1<f64>, Array2<C64>)> {
    // LAPACK reads the buffer column-major, so hand it a column-major copy
    let mut f = Array2::zeros(a.dim().f());
    f.assign(a);
    let (vals, vecs) = f.eigh(UPLO::Upper)?;
    Ok((vals, vecs.as_standard_layout().into_owned()))
}

pub fn eigvalsh(a: &Array2<C64>) -> Result<Array1<f64>> {
    Ok(a.eigvalsh(UPLO::Upper)?)
}

/// `V diag(f(λ)) V†` for Hermitian `a = V diag(λ) V†`.
pub fn hermitian_function(a: &Array2<C64>, f: impl Fn(f64) -> C64) -> Result<Array2<C64>> {
    let (vals, vecs) = eigh(a)?;
    Ok(spectral_apply(&vals, &vecs, f))
}

pub fn spectral_apply(vals: &Array1<f64>, vecs: &Array2<C64>, f: impl Fn(f64) -> C64) -> Array2<C64> {
    let mut scaled = vecs.clone();
    for (mut col, &v) in scaled.columns_mut().into_iter().zip(vals.iter()) {
        let s = f(v);
        col.mapv_inplace(|x| x * s);
    }
    scaled.dot(&dagger(vecs))
}

/// `exp(-i t A)` for Hermitian `A`.
pub fn expm_hermitian(a: &Array2<C64>, t: f64) -> Result<Array2<C64>> {
    hermitian_function(a, |l| C64::from_polar(1.0, -l * t))
}

pub fn to_complex(a: ArrayView2<f64>) -> Array2<C64> {
    a.mapv(|v| C64::new(v, 0.0))
}

/// Reorder the tensor factors of an operator on `⊗ dims`; factor `k` of the output is factor `order[k]` of the input.
pub fn permute_factors(a: &Array2<C64>, dims: &[usize], order: &[usize]) -> Array2<C64> {
    let nf = dims.len();
    let total: usize = dims.iter().product();
    let mut shape = dims.to_vec();
    shape.extend_from_slice(dims);
    let t = a.clone().into_shape_with_order(IxDyn(&shape)).expect("operator shape");
    let mut perm: Vec<usize> = order.to_vec();
    perm.extend(order.iter().map(|&k| k + nf));
    let p = t.permuted_axes(IxDyn(&perm));
    let p = p.as_standard_layout().into_owned();
    p.into_shape_with_order((total, total)).expect("square")
}

/// Partial trace over every factor not listed in `keep` (kept factors retain their order).
pub fn partial_trace_factors(a: &Array2<C64>, dims: &[usize], keep: &[usize]) -> Array2<C64> {
    let traced: Vec<usize> = (0..dims.len()).filter(|k| !keep.contains(k)).collect();
    let mut order = keep.to_vec();
    order.extend(&traced);
    let p = permute_factors(a, dims, &order);
    let dk: usize = keep.iter().map(|&k| dims[k]).product();
    let dr: usize = traced.iter().map(|&k| dims[k]).product();
    let t = p.into_shape_with_order((dk, dr, dk, dr)).expect("shape");
    let mut out = Array2::zeros((dk, dk));
    for i in 0..dk {
        for j in 0..dk {
            let mut acc = C64::new(0.0, 0.0);
            for r in 0..dr {
                acc += t[[i, r, j, r]];
            }
            out[[i, j]] = acc;
        }
    }
    out
}
