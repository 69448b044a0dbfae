//! Exact scalar types the circulation machinery is generic over.
//!
//! Every amount (capacity, utility, flow) is an exact value: cycle canceling
//! only terminates with a finite iteration count when augmentations are
//! exact, and the feasibility test compares a max-flow value to the total
//! imbalance with plain equality. Floating point types are therefore not
//! `Scalar`s.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_integer::Integer;
use num_rational::Ratio;
use num_traits::{Num, Signed, ToPrimitive};

/// An exact, totally ordered, signed number.
pub trait Scalar:
    Copy + Debug + Display + Ord + Num + Signed + Sum + Send + Sync + 'static
{
    /// Lossy conversion for reporting (metrics, plots).
    fn to_f64(self) -> f64;

    fn from_i64(value: i64) -> Self;

    /// True when the value lies on the integer lattice.
    fn is_integral(self) -> bool;
}

macro_rules! impl_scalar_int {
    ($($t:ty),*) => {$(
        impl Scalar for $t {
            #[inline]
            fn to_f64(self) -> f64 {
                self as f64
            }

            #[inline]
            fn from_i64(value: i64) -> Self {
                value as $t
            }

            #[inline]
            fn is_integral(self) -> bool {
                true
            }
        }
    )*};
}

impl_scalar_int!(i32, i64, i128);

impl<I> Scalar for Ratio<I>
where
    I: Integer + Signed + Copy + Debug + Display + ToPrimitive + Send + Sync + 'static,
    I: From<i32> + TryFrom<i64>,
    Ratio<I>: Sum,
{
    fn to_f64(self) -> f64 {
        let n = self.numer().to_f64().unwrap_or(f64::NAN);
        let d = self.denom().to_f64().unwrap_or(f64::NAN);
        n / d
    }

    fn from_i64(value: i64) -> Self {
        match I::try_from(value) {
            Ok(v) => Ratio::from_integer(v),
            Err(_) => panic!("{value} does not fit the rational's integer type"),
        }
    }

    fn is_integral(self) -> bool {
        self.is_integer()
    }
}
