//! Numeric backends for the exact computations.
//!
//! The belief recursions and the drift expression are written once, generic
//! over [`Scalar`]. `f64` gives the fast path with a `1e-12` negligibility
//! threshold; [`num_rational::BigRational`] and `Ratio<i64>` give exact
//! arithmetic where only true zeros are negligible.

use std::fmt::Debug;

use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};
use num_traits::{Num, ToPrimitive};

/// Probability mass below which an `f64` entry counts as outside the support.
pub const SUPPORT_TOLERANCE: f64 = 1e-12;

pub trait Scalar: Clone + Debug + PartialOrd + Num {
    fn from_u64(value: u64) -> Self;

    /// Exact decimal construction, `numer / denom`.
    fn from_ratio(numer: i64, denom: i64) -> Self;

    fn is_negligible(&self) -> bool;

    fn to_f64(&self) -> f64;
}

impl Scalar for f64 {
    fn from_u64(value: u64) -> Self {
        value as f64
    }

    fn from_ratio(numer: i64, denom: i64) -> Self {
        numer as f64 / denom as f64
    }

    fn is_negligible(&self) -> bool {
        self.abs() <= SUPPORT_TOLERANCE
    }

    fn to_f64(&self) -> f64 {
        *self
    }
}

impl Scalar for BigRational {
    fn from_u64(value: u64) -> Self {
        BigRational::from_integer(BigInt::from(value))
    }

    fn from_ratio(numer: i64, denom: i64) -> Self {
        BigRational::new(BigInt::from(numer), BigInt::from(denom))
    }

    fn is_negligible(&self) -> bool {
        num_traits::Zero::is_zero(self)
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
}

impl Scalar for Ratio<i64> {
    fn from_u64(value: u64) -> Self {
        Ratio::from_integer(i64::try_from(value).expect("value fits in i64"))
    }

    fn from_ratio(numer: i64, denom: i64) -> Self {
        Ratio::new(numer, denom)
    }

    fn is_negligible(&self) -> bool {
        num_traits::Zero::is_zero(self)
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
}

/// Sum of a slice of scalars.
pub fn sum<S: Scalar>(values: &[S]) -> S {
    values.iter().cloned().fold(S::zero(), |acc, v| acc + v)
}
