//! Scalar abstraction shared by every probabilistic model in the crate.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point scalar used for probabilities, counts and log-likelihoods.
///
/// Implemented for `f32` and `f64`. Model files are written with 17
/// significant digits, so only `f64` round-trips them exactly.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + LowerExp
    + FromStr
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// `ln(Σ exp(xs))`, returning `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp<T: Real>(xs: &[T]) -> T {
    let max = xs.iter().copied().fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() {
        return max;
    }
    let s: T = xs.iter().map(|&x| (x - max).exp()).sum();
    max + s.ln()
}

/// Writes a scalar with 17 significant digits.
pub fn fmt_sig17<T: Real>(x: T) -> String {
    format!("{:.16e}", x)
}

/// Tolerance used when checking that a probability vector sums to one.
pub(crate) fn simplex_tol<T: Real>(len: usize) -> T {
    let scaled = T::epsilon() * T::from_count(len.max(1)) * T::lit(8.0);
    scaled.max(T::lit(1e-12))
}
