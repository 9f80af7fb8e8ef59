//! Floating-point abstraction shared by every numeric module.
//!
//! Everything in this crate is generic over [`Scalar`], which is implemented
//! for `f32` (training, inference) and `f64` (oracles, gradient checks).

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// f32 or f64, plus a dense matrix product and a byte encoding.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Element type tag written into checkpoint descriptors.
    const DTYPE: &'static str;
    const BYTES: usize;

    /// `c = alpha * a(m×k) * b(k×n) + beta * c(m×n)` with explicit row/column strides.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
        rsc: isize,
        csc: isize,
    );

    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;

    #[inline]
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("f64 converts to every Scalar")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }
}

macro_rules! check_extent {
    ($m:expr, $k:expr, $n:expr, $a:expr, $rsa:expr, $csa:expr, $b:expr, $rsb:expr, $csb:expr, $c:expr, $rsc:expr, $csc:expr) => {
        debug_assert!(extent($m, $k, $rsa, $csa) <= $a.len());
        debug_assert!(extent($k, $n, $rsb, $csb) <= $b.len());
        debug_assert!(extent($m, $n, $rsc, $csc) <= $c.len());
        assert!($rsa >= 0 && $csa >= 0 && $rsb >= 0 && $csb >= 0 && $rsc >= 0 && $csc >= 0);
        assert!(extent($m, $k, $rsa, $csa) <= $a.len());
        assert!(extent($k, $n, $rsb, $csb) <= $b.len());
        assert!(extent($m, $n, $rsc, $csc) <= $c.len());
    };
}

fn extent(rows: usize, cols: usize, rs: isize, cs: isize) -> usize {
    if rows == 0 || cols == 0 {
        return 0;
    }
    (rows - 1) * rs as usize + (cols - 1) * cs as usize + 1
}

impl Scalar for f32 {
    const DTYPE: &'static str = "f32";
    const BYTES: usize = 4;

    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: &[f32],
        rsa: isize,
        csa: isize,
        b: &[f32],
        rsb: isize,
        csb: isize,
        beta: f32,
        c: &mut [f32],
        rsc: isize,
        csc: isize,
    ) {
        check_extent!(m, k, n, a, rsa, csa, b, rsb, csb, c, rsc, csc);
        // SAFETY: all strides are non-negative and the extents were checked above.
        unsafe {
            matrixmultiply::sgemm(
                m,
                k,
                n,
                alpha,
                a.as_ptr(),
                rsa,
                csa,
                b.as_ptr(),
                rsb,
                csb,
                beta,
                c.as_mut_ptr(),
                rsc,
                csc,
            )
        }
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> f32 {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }
}

impl Scalar for f64 {
    const DTYPE: &'static str = "f64";
    const BYTES: usize = 8;

    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: &[f64],
        rsa: isize,
        csa: isize,
        b: &[f64],
        rsb: isize,
        csb: isize,
        beta: f64,
        c: &mut [f64],
        rsc: isize,
        csc: isize,
    ) {
        check_extent!(m, k, n, a, rsa, csa, b, rsb, csb, c, rsc, csc);
        // SAFETY: all strides are non-negative and the extents were checked above.
        unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                n,
                alpha,
                a.as_ptr(),
                rsa,
                csa,
                b.as_ptr(),
                rsb,
                csb,
                beta,
                c.as_mut_ptr(),
                rsc,
                csc,
            )
        }
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> f64 {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }
}

/// Row-major `c = a(m×k) * b(k×n)`, overwriting `c`.
#[cfg(test)]
pub(crate) fn matmul<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    T::gemm(m, k, n, T::one(), a, k as isize, 1, b, n as isize, 1, T::zero(), c, n as isize, 1);
}
