//! Exact comparisons against powers of two with half-integer exponents.
//!
//! Threshold parameters in this crate appear as exponents of two and are
//! frequently half-integers (ratio bounds like `2^1.5`). Comparing a
//! non-negative rational against `c * 2^(e/2)` is decided exactly by
//! squaring both sides, which keeps every certifier and verifier free of
//! floating-point boundary misclassification. Exponents that are not
//! half-integers fall back to `f64` at the call sites, and say so.

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, Zero};
use std::cmp::Ordering;

/// `2^e` as an exact rational, any sign of `e`.
pub fn pow2(e: i64) -> BigRational {
    let mag = BigInt::one() << e.unsigned_abs();
    if e >= 0 {
        BigRational::from_integer(mag)
    } else {
        BigRational::new(BigInt::one(), mag)
    }
}

/// Doubles `x` into an exact exponent-of-two scale when `2x` is an
/// integer; `None` means the exponent is not a half-integer and callers
/// must use their documented float fallback.
pub fn half_exponent(x: f64) -> Option<i64> {
    let doubled = 2.0 * x;
    if doubled.is_finite() && doubled.fract() == 0.0 && doubled.abs() <= 1e15 {
        Some(doubled as i64)
    } else {
        None
    }
}

/// Compares `lhs` with `rhs * 2^(e2 / 2)` exactly. Both operands must be
/// non-negative; the comparison squares both sides when `e2` is odd.
///
/// # Panics
/// Panics if either operand is negative.
pub fn cmp_pow2_scaled(lhs: &BigRational, rhs: &BigRational, e2: i64) -> Ordering {
    assert!(!lhs.is_negative() && !rhs.is_negative(), "operands must be non-negative");
    if e2 % 2 == 0 {
        return lhs.cmp(&(rhs * pow2(e2 / 2)));
    }
    // lhs vs rhs * 2^(e2/2)  <=>  lhs^2 vs rhs^2 * 2^e2, and the squared
    // comparison can only tie when both sides are zero.
    if rhs.is_zero() {
        return lhs.cmp(rhs);
    }
    if lhs.is_zero() {
        return Ordering::Less;
    }
    (lhs * lhs).cmp(&(rhs * rhs * pow2(e2)))
}

/// `lhs >= rhs * 2^(e2 / 2)`, exactly.
pub fn ge_pow2_scaled(lhs: &BigRational, rhs: &BigRational, e2: i64) -> bool {
    cmp_pow2_scaled(lhs, rhs, e2) != Ordering::Less
}

/// Convenience: an integer as a rational.
pub fn int(value: impl Into<BigInt>) -> BigRational {
    BigRational::from_integer(value.into())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pow2_handles_both_signs() {
        assert_eq!(pow2(0), int(1));
        assert_eq!(pow2(5), int(32));
        assert_eq!(pow2(-2), BigRational::new(1.into(), 4.into()));
    }

    #[test]
    fn half_exponent_accepts_halves_only() {
        assert_eq!(half_exponent(1.5), Some(3));
        assert_eq!(half_exponent(-2.0), Some(-4));
        assert_eq!(half_exponent(0.0), Some(0));
        assert_eq!(half_exponent(0.3), None);
        assert_eq!(half_exponent(f64::INFINITY), None);
    }

    #[test]
    fn scaled_comparison_is_exact_at_boundaries() {
        // 2^1.5 = sqrt(8): 3 > sqrt(8) > 2.
        assert_eq!(cmp_pow2_scaled(&int(3), &int(1), 3), Ordering::Greater);
        assert_eq!(cmp_pow2_scaled(&int(2), &int(1), 3), Ordering::Less);
        // Even scale ties exactly.
        assert_eq!(cmp_pow2_scaled(&int(12), &int(3), 4), Ordering::Equal);
        // Zero corner cases.
        assert_eq!(cmp_pow2_scaled(&int(0), &int(0), 7), Ordering::Equal);
        assert_eq!(cmp_pow2_scaled(&int(0), &int(5), -3), Ordering::Less);
        assert!(ge_pow2_scaled(&int(1), &int(4), -4));
    }
}
