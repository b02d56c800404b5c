//! Scalar abstraction shared by plain `f64` evaluation and the autodiff tape.
//!
//! Every formula that must be both checked against an oracle and
//! differentiated during training (robustness, barrier derivatives, `ψ` rows,
//! `ω` boxes) is written once against [`Real`].

use core::fmt::Debug;
use core::ops::{Add, Div, Mul, Neg, Sub};

use crate::math;

pub trait Real:
    Copy
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn value(self) -> f64;

    /// A constant living in the same context as `self`.
    fn lift(self, c: f64) -> Self;

    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn powf(self, p: f64) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn tanh(self) -> Self;
    fn sigmoid(self) -> Self;
    fn softplus(self) -> Self;
    fn relu(self) -> Self;

    /// Value clamped into `[lo, hi]`; the derivative is zero where clamped.
    fn clamp_value(self, lo: f64, hi: f64) -> Self;

    /// `c - self`.
    fn rsub(self, c: f64) -> Self {
        -self + c
    }

    fn recip(self) -> Self {
        self.lift(1.0) / self
    }

    fn square(self) -> Self {
        self * self
    }

    /// Smaller of the two; ties keep `self`.
    fn min(self, other: Self) -> Self {
        if other.value() < self.value() {
            other
        } else {
            self
        }
    }

    /// Larger of the two; ties keep `self`.
    fn max(self, other: Self) -> Self {
        if other.value() > self.value() {
            other
        } else {
            self
        }
    }
}

impl Real for f64 {
    #[inline]
    fn value(self) -> f64 {
        self
    }
    #[inline]
    fn lift(self, c: f64) -> f64 {
        c
    }
    #[inline]
    fn exp(self) -> f64 {
        math::exp(self)
    }
    #[inline]
    fn ln(self) -> f64 {
        math::ln(self)
    }
    #[inline]
    fn sqrt(self) -> f64 {
        math::sqrt(self)
    }
    #[inline]
    fn powf(self, p: f64) -> f64 {
        math::powf(self, p)
    }
    #[inline]
    fn sin(self) -> f64 {
        math::sin(self)
    }
    #[inline]
    fn cos(self) -> f64 {
        math::cos(self)
    }
    #[inline]
    fn tanh(self) -> f64 {
        math::tanh(self)
    }
    #[inline]
    fn sigmoid(self) -> f64 {
        math::sigmoid(self)
    }
    #[inline]
    fn softplus(self) -> f64 {
        math::softplus(self)
    }
    #[inline]
    fn relu(self) -> f64 {
        if self > 0.0 {
            self
        } else {
            0.0
        }
    }
    #[inline]
    fn clamp_value(self, lo: f64, hi: f64) -> f64 {
        if self < lo {
            lo
        } else if self > hi {
            hi
        } else {
            self
        }
    }
}

/// Sum of a nonempty slice.
pub fn sum<R: Real>(xs: &[R]) -> R {
    let mut it = xs.iter().copied();
    let first = it.next().expect("sum of empty slice");
    it.fold(first, |acc, x| acc + x)
}

pub fn dot<R: Real>(a: &[R], b: &[R]) -> R {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = a[0] * b[0];
    for i in 1..a.len() {
        acc = acc + a[i] * b[i];
    }
    acc
}

/// Dot product with a constant vector.
pub fn dot_const<R: Real>(a: &[R], b: &[f64]) -> R {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = a[0] * b[0];
    for i in 1..a.len() {
        acc = acc + a[i] * b[i];
    }
    acc
}
