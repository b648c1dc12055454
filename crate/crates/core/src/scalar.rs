//! Floating-point abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Real scalar the grids, regularizers and learners are generic over (`f32` or `f64`).
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + LowerExp
    + Default
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal. Panics only if the value is unrepresentable, which
    /// cannot happen for finite inputs with `f32`/`f64`.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// `max(strict, 1e4 * eps)`: lets tolerances written for `f64` degrade gracefully
    /// for `f32`.
    fn tol(strict: f64) -> Self {
        let floor = Self::epsilon() * Self::lit(1e4);
        Self::lit(strict).max(floor)
    }

    fn two_pi() -> Self {
        Self::lit(std::f64::consts::TAU)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Kahan-compensated sum; grid integrals over 10^6 cells stay accurate to ~eps.
pub(crate) fn compensated_sum<T: Scalar>(values: impl IntoIterator<Item = T>) -> T {
    let mut sum = T::zero();
    let mut carry = T::zero();
    for v in values {
        let y = v - carry;
        let t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
    sum
}
