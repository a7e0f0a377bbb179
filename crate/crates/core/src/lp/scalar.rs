use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Ordered field the simplex runs over: `f64`, or exact `BigRational`.
pub trait Scalar:
    Clone
    + Debug
    + PartialOrd
    + Zero
    + One
    + Neg<Output = Self>
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Send
    + Sync
{
    /// Exact arithmetic: every tolerance is zero.
    const EXACT: bool;

    fn from_f64(v: f64) -> Self;
    fn from_u128(v: u128) -> Self;
    fn to_f64(&self) -> f64;
    fn abs_val(&self) -> Self;
    fn is_finite_val(&self) -> bool;

    /// Threshold for treating a quantity as zero.
    fn eps(f64_value: f64) -> Self {
        if Self::EXACT {
            Self::zero()
        } else {
            Self::from_f64(f64_value)
        }
    }
}

impl Scalar for f64 {
    const EXACT: bool = false;

    fn from_f64(v: f64) -> Self {
        v
    }

    fn from_u128(v: u128) -> Self {
        v as f64
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn abs_val(&self) -> Self {
        self.abs()
    }

    fn is_finite_val(&self) -> bool {
        self.is_finite()
    }
}

impl Scalar for BigRational {
    const EXACT: bool = true;

    /// Exact conversion; every finite double is a dyadic rational.
    fn from_f64(v: f64) -> Self {
        BigRational::from_float(v).expect("finite float")
    }

    fn from_u128(v: u128) -> Self {
        BigRational::from_integer(BigInt::from(v))
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn abs_val(&self) -> Self {
        self.abs()
    }

    fn is_finite_val(&self) -> bool {
        true
    }
}
