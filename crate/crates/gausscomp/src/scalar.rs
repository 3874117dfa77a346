//! Scalar abstraction shared by the kernel and the estimators.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating-point type usable by the numerical core (`f32` or `f64`).
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` constant into this type.
    fn of(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 constant representable")
    }

    /// Widens to `f64` for aggregation.
    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).expect("finite conversion to f64")
    }
}

impl<T> Real for T where
    T: Float
        + FloatConst
        + FromPrimitive
        + ToPrimitive
        + Debug
        + Display
        + Default
        + Send
        + Sync
        + 'static
{
}

/// Sums `terms` after sorting them ascending.
///
/// Sorting makes the result independent of the order in which the terms were
/// produced, so relabelling the elements of a vector set leaves every
/// per-draw sum bit-identical.
pub fn canonical_sum<T: Real>(terms: &mut [T]) -> T {
    terms.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    terms.iter().fold(T::zero(), |acc, &x| acc + x)
}

/// Numerically stable `log(sum(exp(x)))` with a max shift and canonical summation.
pub fn log_sum_exp<T: Real>(xs: &[T]) -> T {
    let max = xs.iter().fold(T::neg_infinity(), |m, &x| m.max(x));
    if !max.is_finite() {
        return max;
    }
    let mut shifted: Vec<T> = xs.iter().map(|&x| (x - max).exp()).collect();
    max + canonical_sum(&mut shifted).ln()
}

/// Plain dot product.
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}
