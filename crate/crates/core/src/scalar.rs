//! Scalar abstraction shared by every module.
//!
//! All numerical code is written against [`Real`], which is implemented for
//! `f32` and `f64`. Complex matrix entries are `Complex<T>` for the same `T`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use rustfft::FftNum;

/// Floating point scalar: `f32` or `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + FftNum
    + Debug
    + Display
    + Default
    + Sum
    + Send
    + Sync
    + serde::Serialize
    + 'static
{
    /// Converts an `f64` literal. Never fails for the supported types.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_i64_exact(x: i64) -> Self {
        Self::from_i64(x).expect("integer representable")
    }

    #[inline]
    fn from_len(x: usize) -> Self {
        <Self as FromPrimitive>::from_usize(x).expect("usize representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn two() -> Self {
        Self::one() + Self::one()
    }

    #[inline]
    fn half() -> Self {
        Self::one() / Self::two()
    }
}

impl Real for f32 {}
impl Real for f64 {}

pub type C<T> = Complex<T>;

/// Reduces `x` into `[0, 1)`.
#[inline]
pub fn mod1<T: Real>(x: T) -> T {
    let r = x - x.floor();
    // x slightly below an integer can round up to exactly 1
    if r >= T::one() {
        T::zero()
    } else {
        r
    }
}

/// Distance to the nearest integer, `‖x‖`.
#[inline]
pub fn dist_to_int<T: Real>(x: T) -> T {
    let r = mod1(x);
    r.min(T::one() - r)
}

/// Cheap modulus used for pivoting, `|re| + |im|`.
#[inline]
pub(crate) fn abs1<T: Real>(z: C<T>) -> T {
    z.re.abs() + z.im.abs()
}

/// Unevaluated sum `hi + lo` carrying roughly twice the working precision.
///
/// Only the handful of operations needed for long orbits are provided.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoFold<T> {
    pub hi: T,
    pub lo: T,
}

#[inline]
fn two_sum<T: Real>(a: T, b: T) -> (T, T) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

#[inline]
fn two_prod<T: Real>(a: T, b: T) -> (T, T) {
    let p = a * b;
    let err = a.mul_add(b, -p);
    (p, err)
}

impl<T: Real> TwoFold<T> {
    pub fn new(x: T) -> Self {
        Self { hi: x, lo: T::zero() }
    }

    /// Exact product of two working-precision numbers.
    pub fn product(a: T, b: T) -> Self {
        let (hi, lo) = two_prod(a, b);
        Self { hi, lo }
    }

    pub fn add(self, other: Self) -> Self {
        let (s, e) = two_sum(self.hi, other.hi);
        let e = e + self.lo + other.lo;
        let (hi, lo) = two_sum(s, e);
        Self { hi, lo }
    }

    pub fn add_scalar(self, x: T) -> Self {
        self.add(Self::new(x))
    }

    /// Reduces modulo 1 into `[0, 1)`, keeping the low word.
    pub fn mod1(self) -> Self {
        // `hi - floor(hi)` is exact for binary floating point
        let f = self.hi - self.hi.floor();
        let (hi, lo) = two_sum(f, self.lo);
        let mut r = Self { hi, lo };
        if r.hi < T::zero() || (r.hi == T::zero() && r.lo < T::zero()) {
            r = r.add_scalar(T::one());
        }
        if r.hi >= T::one() {
            r = r.add_scalar(-T::one());
        }
        r
    }

    /// Rounds to working precision, reduced into `[0, 1)`.
    pub fn to_unit(self) -> T {
        mod1(self.hi + self.lo)
    }
}

/// Exact product `k·x` reduced modulo 1, for integer `k` of any size.
///
/// `k` is split into 26-bit limbs so every limb product is exact.
pub fn int_times_mod1<T: Real>(k: i128, x: T) -> TwoFold<T> {
    let neg = k < 0;
    let mut k = k.unsigned_abs();
    let limb = 1u128 << 26;
    let mut scale = x;
    let mut acc = TwoFold::new(T::zero());
    let factor = T::from_u64(1 << 26).expect("2^26 representable");
    while k > 0 {
        let digit = (k % limb) as u64;
        k /= limb;
        if digit != 0 {
            let d = T::from_u64(digit).expect("limb representable");
            acc = acc.add(TwoFold::product(d, scale)).mod1();
        }
        // exact: power-of-two scaling, then reduce (also exact)
        scale = scale * factor;
        scale = scale - scale.floor();
    }
    if neg {
        TwoFold { hi: -acc.hi, lo: -acc.lo }.mod1()
    } else {
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mod1_stays_in_unit_interval() {
        assert_eq!(mod1(1.0f64), 0.0);
        assert_eq!(mod1(-0.25f64), 0.75);
        let tiny = -1e-20f64;
        let r = mod1(tiny);
        assert!((0.0..1.0).contains(&r));
    }

    #[test]
    fn dist_to_int_is_symmetric() {
        assert!((dist_to_int(0.9f64) - 0.1).abs() < 1e-15);
        assert!((dist_to_int(-0.9f64) - 0.1).abs() < 1e-15);
        assert_eq!(dist_to_int(3.0f64), 0.0);
    }

    #[test]
    fn int_times_mod1_large_k() {
        // 0.5 * odd = 0.5 mod 1, regardless of size
        let r = int_times_mod1(1_000_000_000_000_001i128, 0.5f64);
        assert!((r.to_unit() - 0.5).abs() < 1e-15);
        let r = int_times_mod1(-3, 0.25f64);
        assert!((r.to_unit() - 0.25).abs() < 1e-15);
        let r = int_times_mod1(0, 0.3f64);
        assert_eq!(r.to_unit(), 0.0);
    }

    #[test]
    fn int_times_mod1_matches_exact_rational() {
        // x = 3/8 is exact; k x mod 1 is computable by hand
        for k in [1i128, 7, 1 << 40, (1 << 60) + 5, -11] {
            let exact = ((k.rem_euclid(8)) * 3 % 8) as f64 / 8.0;
            let got = int_times_mod1(k, 0.375f64).to_unit();
            assert_eq!(got, exact, "k = {k}");
        }
    }

    #[test]
    fn f32_supported() {
        assert_eq!(mod1(1.25f32), 0.25);
        assert_eq!(f32::lit(0.5), 0.5);
    }
}
