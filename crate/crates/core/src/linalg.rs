//! Small dense complex matrix helpers.
//!
//! Blocks are stored row-major in flat `Complex64` slices of length `d * d`
//! so that the scalar (torus) case never allocates; `CMat` is used where a
//! decomposition is needed.

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMat = DMatrix<Complex64>;

pub const I: C64 = C64::new(0.0, 1.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const ZERO: C64 = C64::new(0.0, 0.0);

pub fn to_cmat(block: &[C64], d: usize) -> CMat {
    CMat::from_row_slice(d, d, block)
}

pub fn from_cmat(m: &CMat) -> Vec<C64> {
    let d = m.nrows();
    let mut out = Vec::with_capacity(d * d);
    for r in 0..d {
        for c in 0..d {
            out.push(m[(r, c)]);
        }
    }
    out
}

pub fn identity(d: usize) -> Vec<C64> {
    let mut out = vec![ZERO; d * d];
    for i in 0..d {
        out[i * d + i] = ONE;
    }
    out
}

/// `out = a * b` for `d x d` row-major blocks.
pub fn mul_into(a: &[C64], b: &[C64], out: &mut [C64], d: usize) {
    if d == 1 {
        out[0] = a[0] * b[0];
        return;
    }
    for r in 0..d {
        for c in 0..d {
            let mut acc = ZERO;
            for k in 0..d {
                acc += a[r * d + k] * b[k * d + c];
            }
            out[r * d + c] = acc;
        }
    }
}

pub fn mul(a: &[C64], b: &[C64], d: usize) -> Vec<C64> {
    let mut out = vec![ZERO; d * d];
    mul_into(a, b, &mut out, d);
    out
}

/// `out += s * a * b`.
pub fn mul_acc(a: &[C64], b: &[C64], s: C64, out: &mut [C64], d: usize) {
    if d == 1 {
        out[0] += s * a[0] * b[0];
        return;
    }
    for r in 0..d {
        for c in 0..d {
            let mut acc = ZERO;
            for k in 0..d {
                acc += a[r * d + k] * b[k * d + c];
            }
            out[r * d + c] += s * acc;
        }
    }
}

pub fn adjoint(a: &[C64], d: usize) -> Vec<C64> {
    let mut out = vec![ZERO; d * d];
    for r in 0..d {
        for c in 0..d {
            out[c * d + r] = a[r * d + c].conj();
        }
    }
    out
}

pub fn trace(a: &[C64], d: usize) -> C64 {
    (0..d).map(|i| a[i * d + i]).sum()
}

/// `Tr(a * b)` without forming the product.
pub fn trace_mul(a: &[C64], b: &[C64], d: usize) -> C64 {
    let mut acc = ZERO;
    for r in 0..d {
        for k in 0..d {
            acc += a[r * d + k] * b[k * d + r];
        }
    }
    acc
}

pub fn hs_norm_sq(a: &[C64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

/// Operator norm induced by the Euclidean 2-norm.
pub fn spectral_norm(a: &[C64], d: usize) -> f64 {
    match d {
        0 => 0.0,
        1 => a[0].norm(),
        _ => {
            let svd = to_cmat(a, d).svd(false, false);
            svd.singular_values.iter().cloned().fold(0.0, f64::max)
        }
    }
}

pub fn min_singular_value(a: &[C64], d: usize) -> f64 {
    match d {
        1 => a[0].norm(),
        _ => {
            let svd = to_cmat(a, d).svd(false, false);
            svd.singular_values
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min)
        }
    }
}

pub fn inverse(a: &[C64], d: usize) -> Option<Vec<C64>> {
    if d == 1 {
        return if a[0] == ZERO { None } else { Some(vec![ONE / a[0]]) };
    }
    to_cmat(a, d).try_inverse().map(|m| from_cmat(&m))
}

pub fn expm(a: &CMat) -> CMat {
    a.clone().exp()
}

pub fn max_abs_diff(a: &[C64], b: &[C64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}
