//! Dense kernels shared by the taped ops and the incremental decoder.
//!
//! All matrices are row-major slices. The GEMM routines accumulate into `c`.

use super::tensor::Real;

/// `c[m,n] += a[m,k] · b[k,n]`
pub fn gemm_acc(m: usize, k: usize, n: usize, a: &[Real], b: &[Real], c: &mut [Real]) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    // SAFETY: bounds checked above; strides describe dense row-major layouts.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            n as isize,
            1,
            1.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `c[m,n] += a[m,k] · b[n,k]ᵀ`
pub fn gemm_bt_acc(m: usize, k: usize, n: usize, a: &[Real], b: &[Real], c: &mut [Real]) {
    assert!(a.len() >= m * k && b.len() >= n * k && c.len() >= m * n);
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    // SAFETY: as above; b is read column-major through its strides.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            1,
            k as isize,
            1.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `c[k,n] += a[m,k]ᵀ · b[m,n]`
pub fn gemm_at_acc(m: usize, k: usize, n: usize, a: &[Real], b: &[Real], c: &mut [Real]) {
    assert!(a.len() >= m * k && b.len() >= m * n && c.len() >= k * n);
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    // SAFETY: as above; a is read column-major through its strides.
    unsafe {
        matrixmultiply::dgemm(
            k,
            m,
            n,
            1.0,
            a.as_ptr(),
            1,
            k as isize,
            b.as_ptr(),
            n as isize,
            1,
            1.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

pub fn sigmoid(x: Real) -> Real {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// In-place softmax over the entries of `row` where `allowed` is true; the rest become 0.
/// Returns false when no entry is allowed.
pub fn masked_softmax_in_place(row: &mut [Real], allowed: Option<&[bool]>) -> bool {
    let ok = |j: usize| allowed.is_none_or(|m| m[j]);
    let mut max = Real::NEG_INFINITY;
    for (j, &v) in row.iter().enumerate() {
        if ok(j) && v > max {
            max = v;
        }
    }
    if max == Real::NEG_INFINITY {
        return false;
    }
    let mut sum = 0.0;
    for (j, v) in row.iter_mut().enumerate() {
        if ok(j) {
            *v = (*v - max).exp();
            sum += *v;
        } else {
            *v = 0.0;
        }
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
    true
}

pub fn log_softmax_in_place(row: &mut [Real]) {
    let max = row.iter().copied().fold(Real::NEG_INFINITY, Real::max);
    let lse = max + row.iter().map(|v| (v - max).exp()).sum::<Real>().ln();
    for v in row.iter_mut() {
        *v -= lse;
    }
}

pub fn log_sum_exp(row: &[Real]) -> Real {
    let max = row.iter().copied().fold(Real::NEG_INFINITY, Real::max);
    if max == Real::NEG_INFINITY {
        return max;
    }
    max + row.iter().map(|v| (v - max).exp()).sum::<Real>().ln()
}
