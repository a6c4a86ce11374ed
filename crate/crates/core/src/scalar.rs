//! Coefficient backends: binary floats by default, exact rationals where
//! truncation identities must hold exactly.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::fmt::Debug;
use std::ops::{Add, Mul, Neg, Sub};

/// Scalar that jet and series coefficients range over.
///
/// Only ring operations are required; division never appears in the
/// truncated-polynomial kernels.
pub trait Coeff:
    Clone
    + PartialEq
    + Debug
    + Zero
    + One
    + Neg<Output = Self>
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
{
    fn from_u64(v: u64) -> Self;
    fn from_ratio(num: i64, den: i64) -> Self;
    fn to_f64(&self) -> f64;
    fn abs_f64(&self) -> f64;
    fn is_zero_coeff(&self) -> bool;
}

impl Coeff for f64 {
    fn from_u64(v: u64) -> Self {
        v as f64
    }
    fn from_ratio(num: i64, den: i64) -> Self {
        num as f64 / den as f64
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn abs_f64(&self) -> f64 {
        self.abs()
    }
    fn is_zero_coeff(&self) -> bool {
        *self == 0.0
    }
}

impl Coeff for BigRational {
    fn from_u64(v: u64) -> Self {
        BigRational::from_integer(BigInt::from(v))
    }
    fn from_ratio(num: i64, den: i64) -> Self {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
    fn abs_f64(&self) -> f64 {
        Coeff::to_f64(self).abs()
    }
    fn is_zero_coeff(&self) -> bool {
        Zero::is_zero(self)
    }
}
