//! Big-integer helpers shared by the closed-form coefficient routines.

use std::sync::OnceLock;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};

const TABLE_LEN: usize = 1024;

fn table() -> &'static [BigUint] {
    static TABLE: OnceLock<Vec<BigUint>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut out = Vec::with_capacity(TABLE_LEN);
        let mut acc = BigUint::one();
        out.push(acc.clone());
        for n in 1..TABLE_LEN as u64 {
            acc *= n;
            out.push(acc.clone());
        }
        out
    })
}

/// `n!` as an exact integer. Values up to 1023! are served from a shared table.
pub(crate) fn factorial(n: u64) -> BigUint {
    match table().get(n as usize) {
        Some(f) => f.clone(),
        None => {
            let mut acc = table()[TABLE_LEN - 1].clone();
            for k in TABLE_LEN as u64..=n {
                acc *= k;
            }
            acc
        }
    }
}

/// Borrowing variant for the common in-table case.
pub(crate) fn factorial_ref(n: u64) -> std::borrow::Cow<'static, BigUint> {
    match table().get(n as usize) {
        Some(f) => std::borrow::Cow::Borrowed(f),
        None => std::borrow::Cow::Owned(factorial(n)),
    }
}

/// Product of factorials.
pub(crate) fn factorial_product(args: &[u64]) -> BigUint {
    let mut acc = BigUint::one();
    for &a in args {
        acc *= factorial_ref(a).as_ref();
    }
    acc
}

/// Converts `num / den` to the nearest-ish `f64` without forming a rational.
///
/// The quotient is computed with 64 significant bits before rounding, so the
/// result is within one ulp of the exact value.
pub(crate) fn ratio_to_f64(num: &BigUint, den: &BigUint) -> f64 {
    assert!(!den.is_zero(), "zero denominator");
    if num.is_zero() {
        return 0.0;
    }
    let shift = 64 + den.bits() as i64 - num.bits() as i64;
    let q = if shift >= 0 {
        (num << shift as u64) / den
    } else {
        num / (den << (-shift) as u64)
    };
    let mantissa = q.to_f64().expect("quotient fits in f64");
    ldexp(mantissa, -shift)
}

fn ldexp(mut x: f64, mut exp: i64) -> f64 {
    while exp > 1000 {
        x *= 2f64.powi(1000);
        exp -= 1000;
    }
    while exp < -1000 {
        x *= 2f64.powi(-1000);
        exp += 1000;
    }
    x * 2f64.powi(exp as i32)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_factorials() {
        assert_eq!(factorial(0), BigUint::one());
        assert_eq!(factorial(5), BigUint::from(120u32));
        assert_eq!(factorial(20).to_u64(), Some(2_432_902_008_176_640_000));
    }

    #[test]
    fn factorial_past_table() {
        let big = factorial(1030);
        let prev = factorial(1029);
        assert_eq!(big, prev * 1030u32);
    }

    #[test]
    fn ratio_conversion() {
        let third = ratio_to_f64(&BigUint::from(1u32), &BigUint::from(3u32));
        assert_eq!(third, 1.0 / 3.0);
        let big = factorial(200);
        let r = ratio_to_f64(&(&big * 7u32), &(&big * 2u32));
        assert_eq!(r, 3.5);
        let tiny = ratio_to_f64(&BigUint::one(), &factorial(170));
        assert!((tiny * 7.257415615307994e306 - 1.0).abs() < 1e-15);
    }
}
