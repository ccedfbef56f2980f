//! Signed Q16.16 fixed-point values with saturating arithmetic.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

pub const FRAC_BITS: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Fixed(i32);

impl Fixed {
    pub const ZERO: Fixed = Fixed(0);
    pub const ONE: Fixed = Fixed(1 << FRAC_BITS);
    pub const MAX: Fixed = Fixed(i32::MAX);
    pub const MIN: Fixed = Fixed(i32::MIN);

    pub const fn from_bits(bits: i32) -> Self {
        Fixed(bits)
    }

    pub const fn to_bits(self) -> i32 {
        self.0
    }

    pub const fn from_int(v: i16) -> Self {
        Fixed((v as i32) << FRAC_BITS)
    }

    /// Round-to-nearest conversion, saturating at the representable range.
    pub fn from_f64(x: f64) -> Self {
        if x.is_nan() {
            return Fixed::ZERO;
        }
        let scaled = (x * (1u32 << FRAC_BITS) as f64).round();
        if scaled >= i32::MAX as f64 {
            Fixed::MAX
        } else if scaled <= i32::MIN as f64 {
            Fixed::MIN
        } else {
            Fixed(scaled as i32)
        }
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / (1u32 << FRAC_BITS) as f64
    }

    pub fn saturating_add(self, rhs: Fixed) -> Fixed {
        Fixed(self.0.saturating_add(rhs.0))
    }

    pub fn saturating_sub(self, rhs: Fixed) -> Fixed {
        Fixed(self.0.saturating_sub(rhs.0))
    }

    pub fn saturating_mul(self, rhs: Fixed) -> Fixed {
        saturate_wide((self.0 as i64 * rhs.0 as i64) as i128)
    }

    pub fn to_le_bytes(self) -> [u8; 4] {
        self.0.to_le_bytes()
    }

    pub fn from_le_bytes(bytes: [u8; 4]) -> Self {
        Fixed(i32::from_le_bytes(bytes))
    }
}

/// Collapses a Q32.32 accumulator back to Q16.16, truncating toward negative
/// infinity and saturating.
fn saturate_wide(acc: i128) -> Fixed {
    let shifted = acc >> FRAC_BITS;
    if shifted > i32::MAX as i128 {
        Fixed::MAX
    } else if shifted < i32::MIN as i128 {
        Fixed::MIN
    } else {
        Fixed(shifted as i32)
    }
}

/// `⟨a, b⟩ + bias` with a single rounding step at the end.
///
/// Products are accumulated exactly in Q32.32 so the result does not depend on
/// summation order; only the final narrowing saturates.
pub fn dot_with_bias(a: &[Fixed], b: &[Fixed], bias: Fixed) -> Fixed {
    debug_assert_eq!(a.len(), b.len());
    let mut acc: i128 = (bias.0 as i128) << FRAC_BITS;
    for (x, w) in a.iter().zip(b) {
        acc += x.0 as i64 as i128 * w.0 as i64 as i128;
    }
    saturate_wide(acc)
}

impl Add for Fixed {
    type Output = Fixed;
    fn add(self, rhs: Fixed) -> Fixed {
        self.saturating_add(rhs)
    }
}

impl Sub for Fixed {
    type Output = Fixed;
    fn sub(self, rhs: Fixed) -> Fixed {
        self.saturating_sub(rhs)
    }
}

impl Mul for Fixed {
    type Output = Fixed;
    fn mul(self, rhs: Fixed) -> Fixed {
        self.saturating_mul(rhs)
    }
}

impl Neg for Fixed {
    type Output = Fixed;
    fn neg(self) -> Fixed {
        Fixed(self.0.saturating_neg())
    }
}

impl fmt::Display for Fixed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_f64())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn conversions() {
        assert_eq!(Fixed::from_f64(1.0), Fixed::ONE);
        assert_eq!(Fixed::from_f64(-1.5).to_f64(), -1.5);
        assert_eq!(Fixed::from_int(3).to_bits(), 3 << 16);
        assert_eq!(Fixed::from_f64(1e9), Fixed::MAX);
        assert_eq!(Fixed::from_f64(-1e9), Fixed::MIN);
    }

    #[test]
    fn arithmetic_saturates() {
        assert_eq!(Fixed::MAX + Fixed::ONE, Fixed::MAX);
        assert_eq!(Fixed::MIN - Fixed::ONE, Fixed::MIN);
        assert_eq!(Fixed::from_int(300) * Fixed::from_int(300), Fixed::MAX);
        assert_eq!(Fixed::from_f64(2.5) * Fixed::from_f64(-2.0), Fixed::from_f64(-5.0));
        assert_eq!(-Fixed::MIN, Fixed::MAX);
    }

    #[test]
    fn dot_product_by_hand() {
        let w = [Fixed::ONE, Fixed::ZERO];
        let pos = [Fixed::ONE, Fixed::from_f64(7.0)];
        let neg = [-Fixed::ONE, Fixed::from_f64(7.0)];
        assert_eq!(dot_with_bias(&pos, &w, Fixed::ZERO), Fixed::ONE);
        assert_eq!(dot_with_bias(&neg, &w, Fixed::ZERO), -Fixed::ONE);
        assert_eq!(
            dot_with_bias(&pos, &w, Fixed::from_f64(0.5)),
            Fixed::from_f64(1.5)
        );
    }

    proptest! {
        #[test]
        fn dot_is_order_independent(pairs in proptest::collection::vec((any::<i32>(), any::<i32>()), 0..16)) {
            let a: Vec<Fixed> = pairs.iter().map(|p| Fixed::from_bits(p.0)).collect();
            let b: Vec<Fixed> = pairs.iter().map(|p| Fixed::from_bits(p.1)).collect();
            let mut ra = a.clone();
            let mut rb = b.clone();
            ra.reverse();
            rb.reverse();
            prop_assert_eq!(dot_with_bias(&a, &b, Fixed::ZERO), dot_with_bias(&ra, &rb, Fixed::ZERO));
        }
    }
}
