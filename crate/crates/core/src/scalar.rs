//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point type the crate can compute with.
///
/// Implemented for `f32` and `f64`. All algorithms are written against this
/// trait; the crate root exposes `f64` aliases for the common case.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Converts an `f64` literal, panicking only if the value is not representable
    /// (which never happens for finite values with `f32`/`f64`).
    #[inline]
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable in scalar type")
    }

    #[inline]
    fn of_usize(v: usize) -> Self {
        Self::from_usize(v).expect("count representable in scalar type")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Pivot/feasibility tolerance used by the exact solvers.
    fn solver_tol() -> Self;
}

impl Scalar for f32 {
    fn solver_tol() -> Self {
        1e-4
    }
}

impl Scalar for f64 {
    fn solver_tol() -> Self {
        1e-10
    }
}

pub(crate) fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).fold(F::zero(), |acc, (&x, &y)| acc + x * y)
}

pub(crate) fn norm2_sq<F: Scalar>(a: &[F]) -> F {
    a.iter().fold(F::zero(), |acc, &x| acc + x * x)
}

pub(crate) fn norm2<F: Scalar>(a: &[F]) -> F {
    norm2_sq(a).sqrt()
}

pub(crate) fn dist2<F: Scalar>(a: &[F], b: &[F]) -> F {
    a.iter()
        .zip(b)
        .fold(F::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y))
        .sqrt()
}

/// `sign(0) = 0`.
#[inline]
pub(crate) fn sign0<F: Scalar>(v: F) -> F {
    if v > F::zero() {
        F::one()
    } else if v < F::zero() {
        -F::one()
    } else {
        F::zero()
    }
}

/// Numerically stable `log(1 + exp(s))`.
#[inline]
pub(crate) fn softplus<F: Scalar>(s: F) -> F {
    s.max(F::zero()) + (-s.abs()).exp().ln_1p()
}

/// Numerically stable logistic sigmoid.
#[inline]
pub(crate) fn sigmoid<F: Scalar>(s: F) -> F {
    if s >= F::zero() {
        F::one() / (F::one() + (-s).exp())
    } else {
        let e = s.exp();
        e / (F::one() + e)
    }
}
