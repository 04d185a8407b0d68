//! Safe row-major wrappers around the strided GEMM kernel.

use crate::Real;

fn check(len: usize, rows: usize, cols: usize, what: &str) {
    assert!(
        len >= rows * cols,
        "gemm: {what} buffer holds {len} values, needs {rows}x{cols}"
    );
}

/// `c (m×n) = a (m×k) · b (k×n) + beta·c`.
pub fn gemm_nn<T: Real>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T], beta: T) {
    check(a.len(), m, k, "a");
    check(b.len(), k, n, "b");
    check(c.len(), m, n, "c");
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: extents checked above; all three operands are dense row-major.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            T::one(),
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            n as isize,
            1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        )
    }
}

/// `c (m×n) = aᵀ · b + beta·c` where `a` is stored k×m.
pub fn gemm_tn<T: Real>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T], beta: T) {
    check(a.len(), k, m, "a");
    check(b.len(), k, n, "b");
    check(c.len(), m, n, "c");
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: extents checked above; `a` is read through transposed strides.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            T::one(),
            a.as_ptr(),
            1,
            m as isize,
            b.as_ptr(),
            n as isize,
            1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        )
    }
}

/// `c (m×n) = a · bᵀ + beta·c` where `b` is stored n×k.
pub fn gemm_nt<T: Real>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T], beta: T) {
    check(a.len(), m, k, "a");
    check(b.len(), n, k, "b");
    check(c.len(), m, n, "c");
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: extents checked above; `b` is read through transposed strides.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            T::one(),
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            1,
            k as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        )
    }
}
