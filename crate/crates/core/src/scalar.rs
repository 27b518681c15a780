//! Scalar abstraction shared by every numerical module.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, NumAssign};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point type the market, solvers and networks are generic over.
///
/// Implemented for `f32` and `f64`. Matrix products go through ndarray, which
/// dispatches both to the blocked `matrixmultiply` kernels.
pub trait Scalar:
    Float
    + FromPrimitive
    + NumAssign
    + LinalgScalar
    + ScalarOperand
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Converts an `f64` literal; every finite `f64` maps into both impls.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Casts between scalar types through `f64`.
    #[inline]
    fn cast<T: Scalar>(self) -> T {
        T::lit(self.to_f64_lossy())
    }

    /// `exp(x) - 1` over a slice of non-positive values, in place.
    fn exp_m1_nonpositive(xs: &mut [Self]) {
        xs.iter_mut().for_each(|x| *x = x.exp_m1());
    }
}

impl Scalar for f32 {
    /// Branch-free range reduction and a degree-6 polynomial, written so the
    /// loop vectorizes; absolute error below `2e-7` on `[-87, 0]`.
    fn exp_m1_nonpositive(xs: &mut [f32]) {
        const LOG2E: f32 = std::f32::consts::LOG2_E;
        const LN2_HI: f32 = 0.693_359_4;
        const LN2_LO: f32 = -2.121_944_4e-4;
        const ROUND: f32 = 12_582_912.0;
        for x in xs.iter_mut() {
            let v = if *x < -87.0 { -87.0 } else { *x };
            let k = (v * LOG2E + ROUND) - ROUND;
            let r = v - k * LN2_HI - k * LN2_LO;
            let p = 1.987_569_1e-4;
            let p = p * r + 1.398_199_9e-3;
            let p = p * r + 8.333_452e-3;
            let p = p * r + 4.166_579_6e-2;
            let p = p * r + 0.166_666_66;
            let p = p * r + 0.5;
            let e = (p * r * r + r) + 1.0;
            // k + 127 lands in the low mantissa bits of the biased sum
            let scale = f32::from_bits((k + (ROUND + 127.0)).to_bits() << 23);
            *x = e * scale - 1.0;
        }
    }
}

impl Scalar for f64 {}

pub(crate) fn cast_vec<S: Scalar, T: Scalar>(v: &[S]) -> Vec<T> {
    v.iter().map(|&x| x.cast()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_exp_m1_matches_libm() {
        let mut xs: Vec<f32> = (0..20_000).map(|k| -87.0 * k as f32 / 20_000.0).collect();
        xs.extend([-1e-6, -0.3466, -0.3467, -0.6932, -88.0, -1000.0, 0.0]);
        let exact: Vec<f64> = xs.iter().map(|&x| (x.max(-87.0) as f64).exp_m1()).collect();
        f32::exp_m1_nonpositive(&mut xs);
        for (a, b) in xs.iter().zip(exact) {
            assert!((*a as f64 - b).abs() < 2e-7, "{a} vs {b}");
        }
    }
}
