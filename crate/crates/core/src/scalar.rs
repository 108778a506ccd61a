//! Scalar abstraction shared by the metric and segmentation code.
//!
//! Metrics accumulate fractional overlap weights. Running them over
//! [`BigRational`] gives exact, order-insensitive sums; `f64` is what ends up
//! in reports.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

/// Field-like number type the metrics are generic over.
pub trait Scalar:
    Clone
    + Debug
    + PartialOrd
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Send
    + Sync
{
    fn from_count(n: u64) -> Self;

    /// `num / den`; `den` must be non-zero.
    fn from_ratio(num: u64, den: u64) -> Self {
        Self::from_count(num) / Self::from_count(den)
    }

    fn to_f64(&self) -> f64;
}

impl Scalar for f64 {
    fn from_count(n: u64) -> Self {
        n as f64
    }

    fn to_f64(&self) -> f64 {
        *self
    }
}

impl Scalar for f32 {
    fn from_count(n: u64) -> Self {
        n as f32
    }

    fn to_f64(&self) -> f64 {
        f64::from(*self)
    }
}

impl Scalar for BigRational {
    fn from_count(n: u64) -> Self {
        BigRational::from_integer(BigInt::from(n))
    }

    fn from_ratio(num: u64, den: u64) -> Self {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
}

/// Arithmetic mean of a non-empty slice.
pub(crate) fn mean<S: Scalar>(values: &[S]) -> S {
    let sum = values.iter().cloned().fold(S::zero(), |acc, v| acc + v);
    sum / S::from_count(values.len() as u64)
}
