//! Floating-point abstraction shared by the differentiable core.
//!
//! Training runs in `f32`; the `f64` instantiation exists so gradient checks
//! and reference computations can run without single-precision noise.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Scalar element type for tensors and networks.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Display
    + Sum
    + Send
    + Sync
    + 'static
{
    /// `c <- alpha * a * b + beta * c` with explicit row/column strides.
    ///
    /// # Safety
    /// Pointers and strides must describe valid `m x k`, `k x n` and `m x n`
    /// matrices; `c` must not alias `a` or `b`.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 converts to every scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Neighbouring representable values.
    fn next_up(self) -> Self;
    fn next_down(self) -> Self;
}

impl Scalar for f32 {
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }

    fn next_up(self) -> Self {
        f32::next_up(self)
    }

    fn next_down(self) -> Self {
        f32::next_down(self)
    }
}

impl Scalar for f64 {
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }

    fn next_up(self) -> Self {
        f64::next_up(self)
    }

    fn next_down(self) -> Self {
        f64::next_down(self)
    }
}

/// Correctly rounded sum of `f64` values (Shewchuk partials, as in Python's
/// `math.fsum`). The result does not depend on the order of the inputs, and
/// repeating every input twice doubles it exactly.
pub fn exact_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    let mut special = 0.0f64;
    for mut x in values {
        if !x.is_finite() {
            special += x;
            continue;
        }
        let mut i = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        partials.truncate(i);
        partials.push(x);
    }
    if special != 0.0 || special.is_nan() {
        return special;
    }

    let mut n = partials.len();
    if n == 0 {
        return 0.0;
    }
    n -= 1;
    let mut hi = partials[n];
    let mut lo = 0.0;
    while n > 0 {
        let x = hi;
        n -= 1;
        let y = partials[n];
        hi = x + y;
        let yr = hi - x;
        lo = y - yr;
        if lo != 0.0 {
            break;
        }
    }
    // Round-half-even correction when the remaining partials push the tail
    // exactly onto a tie.
    if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0)) {
        let y = lo * 2.0;
        let x = hi + y;
        let yr = x - hi;
        if y == yr {
            hi = x;
        }
    }
    hi
}

/// Sign of `sum(values) - n * (c + half)`, evaluated exactly. `half` is half
/// the gap to a neighbour of `c`, so `c + half` is a rounding midpoint.
fn cmp_midpoint(values: &[f64], n: f64, c: f64, half: f64) -> std::cmp::Ordering {
    let h = c * n;
    let l = c.mul_add(n, -h);
    let r = exact_sum(values.iter().copied().chain([-h, -l, -(half * n)]));
    r.partial_cmp(&0.0).unwrap_or(std::cmp::Ordering::Equal)
}

/// `sum(values) / values.len()` correctly rounded to `T`. Because the result
/// depends only on the exact rational mean, repeating every input `k` times
/// leaves it bitwise unchanged.
pub fn exact_mean<T: Scalar>(values: &[f64]) -> T {
    use std::cmp::Ordering::*;
    let n = values.len() as f64;
    let q = exact_sum(values.iter().copied()) / n;
    let mut c = T::from_f64_lossy(q);
    if !q.is_finite() {
        return c;
    }
    // Fast path: the f64 estimate is far from any rounding midpoint of T.
    let cf = c.as_f64();
    let up = c.next_up().as_f64() - cf;
    let down = cf - c.next_down().as_f64();
    let slack = 8.0 * f64::EPSILON * q.abs().max(f64::MIN_POSITIVE);
    if (q - cf).abs() + slack < 0.5 * up.min(down) {
        return c;
    }
    loop {
        let cf = c.as_f64();
        let up = c.next_up().as_f64() - cf;
        let down = cf - c.next_down().as_f64();
        match cmp_midpoint(values, n, cf, 0.5 * up) {
            Greater => {
                c = c.next_up();
                continue;
            }
            Equal => {
                if mantissa_is_odd(c) {
                    c = c.next_up();
                }
                return c;
            }
            Less => {}
        }
        match cmp_midpoint(values, n, cf, -0.5 * down) {
            Less => c = c.next_down(),
            Equal => {
                if mantissa_is_odd(c) {
                    c = c.next_down();
                }
                return c;
            }
            Greater => return c,
        }
    }
}

fn mantissa_is_odd<T: Scalar>(c: T) -> bool {
    let (mantissa, _, _) = c.integer_decode();
    mantissa & 1 == 1
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_f32(values: &[f64]) -> f32 {
        exact_mean::<f32>(values)
    }

    #[test]
    fn exact_mean_ignores_duplication() {
        let mut state = 0x2545_f491_4f6c_dd1du64;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for len in [1usize, 2, 3, 7, 50, 301] {
            let v: Vec<f64> = (0..len).map(|_| next() * 1e3).collect();
            for k in [2usize, 3, 5, 7] {
                let rep: Vec<f64> = v.iter().copied().cycle().take(len * k).collect();
                assert_eq!(exact_mean::<f64>(&v), exact_mean::<f64>(&rep));
                assert_eq!(mean_f32(&v), mean_f32(&rep));
            }
        }
    }

    #[test]
    fn exact_mean_rounds_to_nearest() {
        // 1/3 is not representable; the neighbours straddle it.
        assert_eq!(exact_mean::<f64>(&[1.0, 0.0, 0.0]), 1.0 / 3.0);
        assert_eq!(exact_mean::<f32>(&[1.0, 0.0, 0.0]), 1.0f32 / 3.0);
        // Midpoint between 1 and next_up(1) in f32 rounds to even (1.0).
        let mid = 1.0 + f64::from(f32::EPSILON) / 2.0;
        assert_eq!(exact_mean::<f32>(&[mid, mid]), 1.0f32);
        assert_eq!(exact_mean::<f64>(&[0.1, 0.2, 0.3]), 0.2);
        assert_eq!(exact_mean::<f64>(&[1e300, 1e300, -1e300]), 1e300 / 3.0);
    }

    #[test]
    fn exact_sum_handles_cancellation() {
        assert_eq!(exact_sum([1e100, 1.0, -1e100, 1e-100]), 1.0);
        assert_eq!(exact_sum([0.1; 10]), 1.0);
        assert_eq!(exact_sum(std::iter::empty()), 0.0);
    }

    #[test]
    fn exact_sum_is_order_independent() {
        let v = [1e-9, 3.5, -2.25e7, 1e16, 7.0e-3, -1e16, 0.3];
        let mut r = v;
        r.reverse();
        assert_eq!(exact_sum(v), exact_sum(r));
        let doubled: Vec<f64> = v.iter().chain(v.iter()).copied().collect();
        assert_eq!(exact_sum(doubled), 2.0 * exact_sum(v));
    }

    #[test]
    fn gemm_matches_naive_loop() {
        let a = [1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2x3
        let b = [1.0f64, 0.5, -1.0, 2.0, 0.0, 1.0]; // 3x2
        let mut c = [0.0f64; 4];
        unsafe {
            f64::gemm(2, 3, 2, 1.0, a.as_ptr(), 3, 1, b.as_ptr(), 2, 1, 0.0, c.as_mut_ptr(), 2, 1);
        }
        assert_eq!(c, [-1.0, 7.5, -1.0, 18.0]);
    }
}
