//! Exact decimal currency with three fractional digits.
//!
//! Amounts are stored as signed integer thousandths ("millis"). Every
//! conversion from a real value, and every scaling by a fraction, rounds
//! half-to-even at the third fractional digit, so ledgers never drift.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Neg, Sub, SubAssign};
use std::str::FromStr;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub const MILLIS_PER_UNIT: i64 = 1_000;

/// Parts-per-million denominator used by [`Fraction`].
const PPM: i64 = 1_000_000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Money(i64);

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MoneyError {
    #[error("invalid amount {0:?}")]
    Invalid(String),
    #[error("amount {0} is not finite")]
    NotFinite(f64),
    #[error("amount out of range")]
    Overflow,
}

/// Integer division rounding half-to-even. `den` must be positive.
fn div_half_even(num: i128, den: i128) -> i128 {
    debug_assert!(den > 0);
    let q = num.div_euclid(den);
    let r = num.rem_euclid(den);
    match (2 * r).cmp(&den) {
        std::cmp::Ordering::Less => q,
        std::cmp::Ordering::Greater => q + 1,
        std::cmp::Ordering::Equal => {
            if q % 2 == 0 {
                q
            } else {
                q + 1
            }
        }
    }
}

impl Money {
    pub const ZERO: Money = Money(0);

    pub const fn from_millis(millis: i64) -> Self {
        Money(millis)
    }

    pub const fn from_units(units: i64) -> Self {
        Money(units * MILLIS_PER_UNIT)
    }

    pub const fn millis(self) -> i64 {
        self.0
    }

    /// Rounds a real amount half-to-even at the third fractional digit.
    pub fn from_f64(value: f64) -> Result<Self, MoneyError> {
        if !value.is_finite() {
            return Err(MoneyError::NotFinite(value));
        }
        let scaled = (value * MILLIS_PER_UNIT as f64).round_ties_even();
        if scaled.abs() >= i64::MAX as f64 {
            return Err(MoneyError::Overflow);
        }
        Ok(Money(scaled as i64))
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / MILLIS_PER_UNIT as f64
    }

    pub fn is_negative(self) -> bool {
        self.0 < 0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    /// `self × fraction`, rounded half-to-even.
    pub fn scale(self, fraction: Fraction) -> Money {
        let v = div_half_even(self.0 as i128 * fraction.0 as i128, PPM as i128);
        Money(v as i64)
    }

    /// Exact midpoint `(a + b) / 2`, rounded half-to-even.
    pub fn midpoint(a: Money, b: Money) -> Money {
        Money(div_half_even(a.0 as i128 + b.0 as i128, 2) as i64)
    }

    pub fn clamp_to(self, lo: Money, hi: Money) -> Money {
        Money(self.0.clamp(lo.0, hi.0))
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        write!(
            f,
            "{sign}{}.{:03}",
            abs / MILLIS_PER_UNIT as u64,
            abs % MILLIS_PER_UNIT as u64
        )
    }
}

impl FromStr for Money {
    type Err = MoneyError;

    /// Parses a plain decimal literal. More than three fractional digits
    /// are rounded half-to-even, exactly (no float detour).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || MoneyError::Invalid(s.to_string());
        let t = s.trim();
        let (neg, body) = match t.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, t.strip_prefix('+').unwrap_or(t)),
        };
        let (int_part, frac_part) = match body.split_once('.') {
            Some((i, f)) => (i, f),
            None => (body, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(bad());
        }
        if !int_part.chars().all(|c| c.is_ascii_digit())
            || !frac_part.chars().all(|c| c.is_ascii_digit())
        {
            return Err(bad());
        }
        let int_val: i128 = if int_part.is_empty() {
            0
        } else {
            int_part.parse().map_err(|_| MoneyError::Overflow)?
        };
        // Keep every fractional digit so rounding sees the full tail.
        let digits = frac_part.len() as u32;
        let frac_val: i128 = if frac_part.is_empty() {
            0
        } else {
            frac_part.parse().map_err(|_| MoneyError::Overflow)?
        };
        let scale = 10i128.checked_pow(digits).ok_or(MoneyError::Overflow)?;
        let total = int_val
            .checked_mul(scale)
            .and_then(|v| v.checked_add(frac_val))
            .ok_or(MoneyError::Overflow)?;
        let millis = div_half_even(total * MILLIS_PER_UNIT as i128, scale);
        let millis = if neg { -millis } else { millis };
        i64::try_from(millis)
            .map(Money)
            .map_err(|_| MoneyError::Overflow)
    }
}

impl Add for Money {
    type Output = Money;
    fn add(self, rhs: Money) -> Money {
        Money(self.0 + rhs.0)
    }
}

impl AddAssign for Money {
    fn add_assign(&mut self, rhs: Money) {
        self.0 += rhs.0;
    }
}

impl Sub for Money {
    type Output = Money;
    fn sub(self, rhs: Money) -> Money {
        Money(self.0 - rhs.0)
    }
}

impl SubAssign for Money {
    fn sub_assign(&mut self, rhs: Money) {
        self.0 -= rhs.0;
    }
}

impl Neg for Money {
    type Output = Money;
    fn neg(self) -> Money {
        Money(-self.0)
    }
}

impl Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        iter.fold(Money::ZERO, Add::add)
    }
}

impl<'a> Sum<&'a Money> for Money {
    fn sum<I: Iterator<Item = &'a Money>>(iter: I) -> Money {
        iter.copied().sum()
    }
}

// Serialized as a decimal string ("12.500") so traces stay exact. Numbers
// are accepted on input for hand-written config files.
impl Serialize for Money {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Money {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct MoneyVisitor;

        impl Visitor<'_> for MoneyVisitor {
            type Value = Money;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a decimal amount as a string or number")
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Money, E> {
                v.parse().map_err(E::custom)
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Money, E> {
                v.checked_mul(MILLIS_PER_UNIT)
                    .map(Money)
                    .ok_or_else(|| E::custom(MoneyError::Overflow))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Money, E> {
                i64::try_from(v)
                    .map_err(|_| E::custom(MoneyError::Overflow))
                    .and_then(|v| self.visit_i64(v))
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Money, E> {
                // Shortest round-trip repr, then exact decimal parse.
                format!("{v}").parse().map_err(E::custom)
            }
        }

        deserializer.deserialize_any(MoneyVisitor)
    }
}

/// A dimensionless scale factor stored exactly in parts per million.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Fraction(i64);

impl Fraction {
    pub const ONE: Fraction = Fraction(PPM);

    pub const fn from_ppm(ppm: i64) -> Self {
        Fraction(ppm)
    }

    pub fn from_f64(value: f64) -> Result<Self, MoneyError> {
        if !value.is_finite() {
            return Err(MoneyError::NotFinite(value));
        }
        Ok(Fraction((value * PPM as f64).round_ties_even() as i64))
    }

    pub fn ppm(self) -> i64 {
        self.0
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / PPM as f64
    }
}

impl Serialize for Fraction {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_f64(self.to_f64())
    }
}

impl<'de> Deserialize<'de> for Fraction {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let v = f64::deserialize(deserializer)?;
        Fraction::from_f64(v).map_err(de::Error::custom)
    }
}
