//! Exact decimal parameters with micro-unit resolution (value = n / 10^6).

use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MICRO_SCALE: u32 = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MicroParseError {
    #[error("empty decimal")]
    Empty,
    #[error("invalid decimal `{0}`")]
    Invalid(String),
    #[error("`{0}` has more than 6 fractional digits")]
    TooPrecise(String),
    #[error("`{0}` is out of range")]
    OutOfRange(String),
}

/// A nonnegative exact rational stored as an integer count of millionths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Micro(u32);

impl Micro {
    pub const ZERO: Micro = Micro(0);
    pub const ONE: Micro = Micro(MICRO_SCALE);

    pub const fn from_units(units: u32) -> Self {
        Micro(units)
    }

    pub const fn units(self) -> u32 {
        self.0
    }

    /// Nearest micro-unit value to `x`, clamped at zero.
    pub fn from_f64_rounded(x: f64) -> Self {
        let scaled = (x * MICRO_SCALE as f64).round();
        if scaled <= 0.0 || scaled.is_nan() {
            Micro(0)
        } else if scaled >= u32::MAX as f64 {
            Micro(u32::MAX)
        } else {
            Micro(scaled as u32)
        }
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / MICRO_SCALE as f64
    }

    pub fn to_ratio(self) -> Ratio<i128> {
        Ratio::new(self.0 as i128, MICRO_SCALE as i128)
    }

    /// True when the value lies strictly inside (0, 1).
    pub fn is_open_unit(self) -> bool {
        self.0 > 0 && self.0 < MICRO_SCALE
    }

    /// True when the value lies in [0, 1].
    pub fn is_closed_unit(self) -> bool {
        self.0 <= MICRO_SCALE
    }
}

impl fmt::Display for Micro {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let int = self.0 / MICRO_SCALE;
        let frac = self.0 % MICRO_SCALE;
        if frac == 0 {
            return write!(f, "{int}");
        }
        let digits = format!("{frac:06}");
        write!(f, "{int}.{}", digits.trim_end_matches('0'))
    }
}

impl FromStr for Micro {
    type Err = MicroParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() {
            return Err(MicroParseError::Empty);
        }
        let (int_part, frac_part) = match s.split_once('.') {
            Some((i, f)) => (i, f),
            None => (s, ""),
        };
        let all_digits = |p: &str| p.bytes().all(|b| b.is_ascii_digit());
        if !all_digits(int_part) || !all_digits(frac_part) || (int_part.is_empty() && frac_part.is_empty()) {
            return Err(MicroParseError::Invalid(s.to_string()));
        }
        let frac_trimmed = frac_part.trim_end_matches('0');
        if frac_trimmed.len() > 6 {
            return Err(MicroParseError::TooPrecise(s.to_string()));
        }
        let int: u64 = if int_part.is_empty() {
            0
        } else {
            int_part
                .parse()
                .map_err(|_| MicroParseError::OutOfRange(s.to_string()))?
        };
        let mut frac: u64 = 0;
        for (i, b) in frac_trimmed.bytes().enumerate() {
            frac += (b - b'0') as u64 * 10u64.pow(5 - i as u32);
        }
        let total = int
            .checked_mul(MICRO_SCALE as u64)
            .and_then(|v| v.checked_add(frac))
            .filter(|v| *v <= u32::MAX as u64)
            .ok_or_else(|| MicroParseError::OutOfRange(s.to_string()))?;
        Ok(Micro(total as u32))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_exact_decimals() {
        assert_eq!("0.05".parse::<Micro>().unwrap().units(), 50_000);
        assert_eq!("0.1".parse::<Micro>().unwrap().units(), 100_000);
        assert_eq!(".000001".parse::<Micro>().unwrap().units(), 1);
        assert_eq!("1".parse::<Micro>().unwrap(), Micro::ONE);
        assert_eq!("0.0500000".parse::<Micro>().unwrap().units(), 50_000);
    }

    #[test]
    fn rejects_bad_input() {
        assert!("".parse::<Micro>().is_err());
        assert!("abc".parse::<Micro>().is_err());
        assert!("-0.1".parse::<Micro>().is_err());
        assert!(matches!(
            "0.0000001".parse::<Micro>(),
            Err(MicroParseError::TooPrecise(_))
        ));
        assert!("5000".parse::<Micro>().is_err());
    }

    #[test]
    fn display_round_trips() {
        for s in ["0.05", "0.1", "1", "0.000001", "0.999999", "0"] {
            let m: Micro = s.parse().unwrap();
            assert_eq!(m.to_string(), s);
        }
    }
}
