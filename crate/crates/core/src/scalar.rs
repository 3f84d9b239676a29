use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point type the numeric core is written against.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal. Every `Scalar` can represent (a rounding of)
    /// any finite `f64`, so this never fails for finite input.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Logistic sigmoid, evaluated on the branch that never overflows `exp`.
    #[inline]
    fn sigmoid(self) -> Self {
        if self >= Self::zero() {
            Self::one() / (Self::one() + (-self).exp())
        } else {
            let e = self.exp();
            e / (Self::one() + e)
        }
    }

    /// `ln(1 + e^x)` without overflow for large `x` or loss of precision for
    /// very negative `x`.
    #[inline]
    fn softplus(self) -> Self {
        if self > Self::zero() {
            self + (-self).exp().ln_1p()
        } else {
            self.exp().ln_1p()
        }
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_complements() {
        for i in -300..=300 {
            let x = i as f64 * 0.1;
            assert!((x.sigmoid() + (-x).sigmoid() - 1.0).abs() <= 1e-12, "x = {x}");
        }
    }

    #[test]
    fn softplus_matches_log_sigmoid() {
        for &x in &[-40.0f64, -3.0, -0.5, 0.0, 0.5, 3.0, 40.0] {
            let direct = -(x.sigmoid()).ln();
            assert!(((-x).softplus() - direct).abs() < 1e-12);
        }
        assert!((0.0f64.softplus() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(800.0f64.softplus().is_finite());
    }

    #[test]
    fn single_precision_works() {
        assert!((0.0f32.sigmoid() - 0.5).abs() < 1e-7);
        assert_eq!(f32::lit(0.25), 0.25);
    }
}
