//! Scalar helpers shared by the tape and the closed-form evaluators.

use crate::scalar::Scalar;

/// `0.5 * ln(2π)`.
pub const HALF_LN_TWO_PI: f64 = 0.918_938_533_204_672_8;

pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn softplus<T: Scalar>(x: T) -> T {
    if x > T::lit(30.0) {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Log-density of the standard normal.
pub fn std_normal_log_pdf<T: Scalar>(x: T) -> T {
    -T::lit(HALF_LN_TWO_PI) - T::lit(0.5) * x * x
}
