//! Exact fixed-point decimals.
//!
//! Covariates are stored as scaled integers so that "equal covariate
//! vectors" is an exact predicate instead of a float comparison. A value
//! is kept in canonical form (`units % 10 != 0` unless `scale == 0`), so
//! `1.50` and `1.5` are the same value, equality agrees with ordering,
//! and hashing agrees with equality.

use serde::{Serialize, Serializer};
use std::cmp::Ordering;
use std::fmt;
use thiserror::Error;

/// Largest number of decimal places a [`Fixed`] can carry.
pub const MAX_PRECISION: u8 = 18;

/// Exact powers of ten; every entry is exactly representable in an `f64`.
const POW10_F64: [f64; 19] = [
    1e0, 1e1, 1e2, 1e3, 1e4, 1e5, 1e6, 1e7, 1e8, 1e9, 1e10, 1e11, 1e12, 1e13, 1e14, 1e15, 1e16,
    1e17, 1e18,
];

fn pow10_i128(exp: u8) -> i128 {
    10i128.pow(u32::from(exp))
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FixedError {
    #[error("empty numeric value")]
    Empty,
    #[error("invalid numeric value `{0}`")]
    Invalid(String),
    #[error("value `{value}` has more than {precision} decimal places")]
    TooManyDecimals { value: String, precision: u8 },
    #[error("value `{0}` is out of range for fixed-point storage")]
    OutOfRange(String),
    #[error("precision {0} exceeds the supported maximum of {max}", max = MAX_PRECISION)]
    PrecisionTooLarge(u8),
}

/// An exact decimal `units * 10^-scale` in canonical form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Fixed {
    units: i64,
    scale: u8,
}

impl Fixed {
    pub const ZERO: Fixed = Fixed { units: 0, scale: 0 };

    /// Builds a value from raw scaled units, reducing to canonical form.
    pub fn from_units(units: i64, scale: u8) -> Result<Fixed, FixedError> {
        if scale > MAX_PRECISION {
            return Err(FixedError::PrecisionTooLarge(scale));
        }
        let mut units = units;
        let mut scale = scale;
        if units == 0 {
            scale = 0;
        }
        while scale > 0 && units % 10 == 0 {
            units /= 10;
            scale -= 1;
        }
        Ok(Fixed { units, scale })
    }

    /// Canonicalizes a wide intermediate result, e.g. a distance sum.
    pub(crate) fn from_i128(units: i128, scale: u8) -> Result<Fixed, FixedError> {
        let mut units = units;
        let mut scale = scale;
        if units == 0 {
            scale = 0;
        }
        while scale > 0 && units % 10 == 0 {
            units /= 10;
            scale -= 1;
        }
        let units = i64::try_from(units)
            .map_err(|_| FixedError::OutOfRange(format!("{units}e-{scale}")))?;
        Fixed::from_units(units, scale)
    }

    pub fn from_int(value: i64) -> Fixed {
        Fixed {
            units: value,
            scale: 0,
        }
    }

    /// Parses a plain decimal literal (`12`, `1.50`, `-0.5`) exactly, at the
    /// given precision. Digits beyond the precision are rejected unless they
    /// are trailing zeros, because dropping them would lose exactness.
    pub fn parse(text: &str, precision: u8) -> Result<Fixed, FixedError> {
        if precision > MAX_PRECISION {
            return Err(FixedError::PrecisionTooLarge(precision));
        }
        let s = text.trim();
        if s.is_empty() {
            return Err(FixedError::Empty);
        }
        let (negative, digits) = match s.as_bytes()[0] {
            b'-' => (true, &s[1..]),
            b'+' => (false, &s[1..]),
            _ => (false, s),
        };
        let (int_part, frac_part) = match digits.split_once('.') {
            Some((i, f)) => (i, f),
            None => (digits, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(FixedError::Invalid(text.to_string()));
        }
        if !int_part.bytes().all(|b| b.is_ascii_digit())
            || !frac_part.bytes().all(|b| b.is_ascii_digit())
        {
            return Err(FixedError::Invalid(text.to_string()));
        }
        let frac_trimmed = frac_part.trim_end_matches('0');
        if frac_trimmed.len() > precision as usize {
            return Err(FixedError::TooManyDecimals {
                value: text.to_string(),
                precision,
            });
        }
        let mut units: i128 = 0;
        for b in int_part.bytes() {
            units = units
                .checked_mul(10)
                .and_then(|u| u.checked_add(i128::from(b - b'0')))
                .ok_or_else(|| FixedError::OutOfRange(text.to_string()))?;
        }
        for b in frac_trimmed.bytes() {
            units = units * 10 + i128::from(b - b'0');
        }
        units = units
            .checked_mul(pow10_i128(precision - frac_trimmed.len() as u8))
            .ok_or_else(|| FixedError::OutOfRange(text.to_string()))?;
        if negative {
            units = -units;
        }
        Fixed::from_i128(units, precision).map_err(|_| FixedError::OutOfRange(text.to_string()))
    }

    pub fn units(&self) -> i64 {
        self.units
    }

    pub fn scale(&self) -> u8 {
        self.scale
    }

    pub fn is_zero(&self) -> bool {
        self.units == 0
    }

    pub fn is_negative(&self) -> bool {
        self.units < 0
    }

    /// Value as a float; deterministic, but only exact while the units fit
    /// in the 53-bit mantissa.
    pub fn to_f64(&self) -> f64 {
        self.units as f64 / POW10_F64[self.scale as usize]
    }

    fn units_at(&self, scale: u8) -> i128 {
        debug_assert!(scale >= self.scale);
        i128::from(self.units) * pow10_i128(scale - self.scale)
    }

    /// `|self - other|` in exact arithmetic.
    pub fn abs_diff(&self, other: &Fixed) -> Result<Fixed, FixedError> {
        let scale = self.scale.max(other.scale);
        let diff = self.units_at(scale) - other.units_at(scale);
        Fixed::from_i128(diff.abs(), scale)
    }

    /// Renders with exactly `precision` decimal places; `precision` must be
    /// at least the canonical scale for the rendering to stay exact.
    pub fn render(&self, precision: u8) -> String {
        let precision = precision.max(self.scale);
        let units = self.units_at(precision);
        let sign = if units < 0 { "-" } else { "" };
        let abs = units.unsigned_abs();
        let base = pow10_i128(precision) as u128;
        if precision == 0 {
            format!("{sign}{abs}")
        } else {
            format!(
                "{sign}{}.{:0width$}",
                abs / base,
                abs % base,
                width = precision as usize
            )
        }
    }
}

impl PartialOrd for Fixed {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Fixed {
    fn cmp(&self, other: &Self) -> Ordering {
        // scales are <= 18, so the cross-multiplied values fit in i128
        let scale = self.scale.max(other.scale);
        self.units_at(scale).cmp(&other.units_at(scale))
    }
}

impl fmt::Display for Fixed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.render(self.scale))
    }
}

impl Serialize for Fixed {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_scales_exactly() {
        let v = Fixed::parse("1.50", 2).unwrap();
        assert_eq!(v.units_at(2), 150);
        assert_eq!(v.render(2), "1.50");
    }

    #[test]
    fn canonical_form_unifies_representations() {
        let a = Fixed::parse("1.50", 2).unwrap();
        let b = Fixed::parse("1.5", 6).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.cmp(&b), Ordering::Equal);
    }

    #[test]
    fn trailing_zeros_beyond_precision_are_fine() {
        let v = Fixed::parse("2.500000000", 2).unwrap();
        assert_eq!(v, Fixed::parse("2.5", 2).unwrap());
    }

    #[test]
    fn excess_significant_decimals_rejected() {
        let err = Fixed::parse("1.505", 2).unwrap_err();
        assert!(matches!(err, FixedError::TooManyDecimals { .. }));
    }

    #[test]
    fn rejects_garbage() {
        assert!(Fixed::parse("", 6).is_err());
        assert!(Fixed::parse(".", 6).is_err());
        assert!(Fixed::parse("1.2.3", 6).is_err());
        assert!(Fixed::parse("abc", 6).is_err());
        assert!(Fixed::parse("1e3", 6).is_err());
    }

    #[test]
    fn negative_values_parse_but_are_flagged() {
        let v = Fixed::parse("-0.5", 6).unwrap();
        assert!(v.is_negative());
    }

    #[test]
    fn ordering_across_scales() {
        let a = Fixed::parse("0.3", 1).unwrap();
        let b = Fixed::parse("0.25", 2).unwrap();
        assert!(a > b);
    }

    #[test]
    fn abs_diff_is_exact() {
        let a = Fixed::parse("0.3", 6).unwrap();
        let b = Fixed::parse("0.1", 6).unwrap();
        assert_eq!(a.abs_diff(&b).unwrap(), Fixed::parse("0.2", 6).unwrap());
    }

    #[test]
    fn display_is_canonical() {
        assert_eq!(Fixed::parse("1.50", 4).unwrap().to_string(), "1.5");
        assert_eq!(Fixed::parse("3", 6).unwrap().to_string(), "3");
        assert_eq!(Fixed::parse("-0.07", 6).unwrap().to_string(), "-0.07");
    }

    #[test]
    fn out_of_range_rejected() {
        assert!(Fixed::parse("99999999999999999999", 6).is_err());
    }
}
