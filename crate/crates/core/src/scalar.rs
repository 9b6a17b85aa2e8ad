//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Real floating point type the crate is generic over (`f32` or `f64`).
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + rustfft::FftNum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Complex number over the crate scalar.
pub type C<T> = Complex<T>;

/// Max of the real and imaginary magnitudes, the per-component norm used by error checks.
pub fn cmax_abs<T: Real>(z: C<T>) -> T {
    z.re.abs().max(z.im.abs())
}

pub fn is_finite_c<T: Real>(z: C<T>) -> bool {
    z.re.is_finite() && z.im.is_finite()
}

/// `sum_k |z_k|` over a complex vector.
pub fn norm1<T: Real>(z: &[C<T>]) -> T {
    z.iter().fold(T::zero(), |acc, v| acc + v.norm())
}

/// Componentwise max modulus.
pub fn norm_inf<T: Real>(z: &[C<T>]) -> T {
    z.iter().fold(T::zero(), |acc, v| acc.max(v.norm()))
}
