use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Element type for model compute: `f32` for training, `f64` for gradient checks.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Default + Debug + Send + Sync + AddAssign + SubAssign + MulAssign + Sum + 'static
{
    fn erf(self) -> Self;

    fn from_f64_lossy(x: f64) -> Self;

    /// `c = alpha * a·b + beta * c` on strided row-major views.
    ///
    /// # Safety
    /// Every index reachable through the dimensions and strides must lie
    /// inside the backing slices; [`gemm`] checks this before calling.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize, k: usize, n: usize, alpha: Self,
        a: *const Self, rsa: isize, csa: isize,
        b: *const Self, rsb: isize, csb: isize,
        beta: Self,
        c: *mut Self, rsc: isize, csc: isize,
    );
}

impl Scalar for f32 {
    fn erf(self) -> Self {
        libm::erff(self)
    }

    fn from_f64_lossy(x: f64) -> Self {
        x as f32
    }

    unsafe fn gemm_raw(
        m: usize, k: usize, n: usize, alpha: Self,
        a: *const Self, rsa: isize, csa: isize,
        b: *const Self, rsb: isize, csb: isize,
        beta: Self,
        c: *mut Self, rsc: isize, csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Scalar for f64 {
    fn erf(self) -> Self {
        libm::erf(self)
    }

    fn from_f64_lossy(x: f64) -> Self {
        x
    }

    unsafe fn gemm_raw(
        m: usize, k: usize, n: usize, alpha: Self,
        a: *const Self, rsa: isize, csa: isize,
        b: *const Self, rsb: isize, csb: isize,
        beta: Self,
        c: *mut Self, rsc: isize, csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// A strided matrix view: `(offset, row stride, col stride)` into a slice.
#[derive(Clone, Copy, Debug)]
pub struct View {
    pub offset: usize,
    pub rs: usize,
    pub cs: usize,
}

impl View {
    pub fn rows(offset: usize, cols: usize) -> Self {
        Self { offset, rs: cols, cs: 1 }
    }

    /// Transposed view of a row-major block with `cols` columns.
    pub fn transposed(offset: usize, cols: usize) -> Self {
        Self { offset, rs: 1, cs: cols }
    }

    pub fn strided(offset: usize, rs: usize, cs: usize) -> Self {
        Self { offset, rs, cs }
    }

    fn last(&self, rows: usize, cols: usize) -> usize {
        if rows == 0 || cols == 0 {
            self.offset
        } else {
            self.offset + (rows - 1) * self.rs + (cols - 1) * self.cs
        }
    }
}

/// Bounds-checked strided GEMM: `c[m×n] = alpha * a[m×k] · b[k×n] + beta * c`.
#[allow(clippy::too_many_arguments)]
pub fn gemm<T: Scalar>(
    m: usize, k: usize, n: usize, alpha: T,
    a: &[T], av: View,
    b: &[T], bv: View,
    beta: T,
    c: &mut [T], cv: View,
) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for i in 0..m {
            for j in 0..n {
                let idx = cv.offset + i * cv.rs + j * cv.cs;
                c[idx] = if beta == T::zero() { T::zero() } else { beta * c[idx] };
            }
        }
        return;
    }
    assert!(av.last(m, k) < a.len(), "gemm: a out of bounds");
    assert!(bv.last(k, n) < b.len(), "gemm: b out of bounds");
    assert!(cv.last(m, n) < c.len(), "gemm: c out of bounds");
    // SAFETY: the asserts above cover the furthest element of each view.
    unsafe {
        T::gemm_raw(
            m, k, n, alpha,
            a.as_ptr().add(av.offset), av.rs as isize, av.cs as isize,
            b.as_ptr().add(bv.offset), bv.rs as isize, bv.cs as isize,
            beta,
            c.as_mut_ptr().add(cv.offset), cv.rs as isize, cv.cs as isize,
        );
    }
}

#[inline]
pub fn cast<T: Scalar>(x: f64) -> T {
    T::from_f64_lossy(x)
}

/// Exact GELU, `x * Φ(x)`.
#[inline]
pub fn gelu<T: Scalar>(x: T) -> T {
    let half = cast::<T>(0.5);
    half * x * (T::one() + (x * cast(std::f64::consts::FRAC_1_SQRT_2)).erf())
}

#[inline]
pub fn gelu_grad<T: Scalar>(x: T) -> T {
    let half = cast::<T>(0.5);
    let cdf = half * (T::one() + (x * cast(std::f64::consts::FRAC_1_SQRT_2)).erf());
    let pdf = (-(x * x) * half).exp() * cast(0.398_942_280_401_432_7);
    cdf + x * pdf
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_matches_naive_with_transpose() {
        // a: 2x3, b stored as 4x3 and read transposed (3x4)
        let a: Vec<f64> = (0..6).map(|x| x as f64 + 1.0).collect();
        let b: Vec<f64> = (0..12).map(|x| (x as f64) * 0.5 - 2.0).collect();
        let mut c = vec![1.0; 8];
        gemm(2, 3, 4, 1.0, &a, View::rows(0, 3), &b, View::transposed(0, 3), 1.0, &mut c, View::rows(0, 4));
        for i in 0..2 {
            for j in 0..4 {
                let expect: f64 = 1.0 + (0..3).map(|p| a[i * 3 + p] * b[j * 3 + p]).sum::<f64>();
                assert!((c[i * 4 + j] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gelu_derivative_matches_differences() {
        for &x in &[-3.0f64, -0.7, 0.0, 0.4, 2.5] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8, "{x}");
        }
        assert!((gelu(1.0f64) - 0.841_344_746_068_542_9).abs() < 1e-12);
    }
}
