//! Exact non-negative decimal ratios.
//!
//! Mistake rates and hallucination thresholds are compared against integer
//! token counts, so they are kept as exact fractions rather than floats:
//! `0.95 * 100` must be exactly `95`.

use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

/// A non-negative rational number parsed from decimal (`"1.20"`), integer
/// (`"3"`) or fraction (`"1/3"`) notation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rational(Ratio<u64>);

impl Rational {
    pub const ZERO: Rational = Rational(Ratio::new_raw(0, 1));
    pub const ONE: Rational = Rational(Ratio::new_raw(1, 1));

    pub fn new(numer: u64, denom: u64) -> Result<Self, Error> {
        if denom == 0 {
            return Err(Error::InvalidRatio(format!("{numer}/{denom}")));
        }
        Ok(Rational(Ratio::new(numer, denom)))
    }

    pub fn from_integer(n: u64) -> Self {
        Rational(Ratio::from_integer(n))
    }

    pub fn numer(&self) -> u64 {
        *self.0.numer()
    }

    pub fn denom(&self) -> u64 {
        *self.0.denom()
    }

    pub fn is_zero(&self) -> bool {
        self.numer() == 0
    }

    /// `floor(self)`.
    pub fn floor_int(&self) -> u64 {
        self.numer() / self.denom()
    }

    /// `self * n` rounded to the nearest integer, halves away from zero.
    pub fn mul_round(&self, n: u64) -> u64 {
        let num = self.numer() as u128 * n as u128;
        let den = self.denom() as u128;
        ((2 * num + den) / (2 * den)) as u64
    }

    /// Exact comparison of `lhs` against `self * rhs`.
    pub fn cmp_scaled(&self, lhs: u64, rhs: u64) -> std::cmp::Ordering {
        (lhs as u128 * self.denom() as u128).cmp(&(self.numer() as u128 * rhs as u128))
    }

    /// Decimal string with exactly `decimals` digits after the point,
    /// rounded half away from zero.
    pub fn to_fixed(&self, decimals: u32) -> String {
        let scale = 10u64.pow(decimals);
        let scaled = self.mul_round(scale);
        if decimals == 0 {
            return scaled.to_string();
        }
        format!("{}.{:0width$}", scaled / scale, scaled % scale, width = decimals as usize)
    }

    pub fn to_f64(&self) -> f64 {
        self.numer() as f64 / self.denom() as f64
    }
}

impl Default for Rational {
    fn default() -> Self {
        Rational::ZERO
    }
}

impl FromStr for Rational {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || Error::InvalidRatio(s.to_string());
        let t = s.trim();
        if let Some((n, d)) = t.split_once('/') {
            let n: u64 = n.trim().parse().map_err(|_| bad())?;
            let d: u64 = d.trim().parse().map_err(|_| bad())?;
            return Rational::new(n, d).map_err(|_| bad());
        }
        let (int_part, frac_part) = t.split_once('.').unwrap_or((t, ""));
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(bad());
        }
        if !int_part.chars().all(|c| c.is_ascii_digit())
            || !frac_part.chars().all(|c| c.is_ascii_digit())
            || frac_part.len() > 18
        {
            return Err(bad());
        }
        let int: u64 = if int_part.is_empty() {
            0
        } else {
            int_part.parse().map_err(|_| bad())?
        };
        let denom = 10u64.pow(frac_part.len() as u32);
        let frac: u64 = if frac_part.is_empty() {
            0
        } else {
            frac_part.parse().map_err(|_| bad())?
        };
        let numer = int
            .checked_mul(denom)
            .and_then(|v| v.checked_add(frac))
            .ok_or_else(bad)?;
        Rational::new(numer, denom)
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Terminating decimals print as decimals, everything else as a fraction.
        let mut d = self.denom();
        while d.is_multiple_of(2) {
            d /= 2;
        }
        while d.is_multiple_of(5) {
            d /= 5;
        }
        if d != 1 {
            return write!(f, "{}/{}", self.numer(), self.denom());
        }
        let int = self.floor_int();
        let mut rem = self.numer() % self.denom();
        if rem == 0 {
            return write!(f, "{int}");
        }
        let mut digits = String::new();
        while rem != 0 {
            rem *= 10;
            digits.push(char::from(b'0' + (rem / self.denom()) as u8));
            rem %= self.denom();
        }
        write!(f, "{int}.{digits}")
    }
}

impl Serialize for Rational {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Rational {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Text(String),
            Int(u64),
            Float(f64),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Text(s) => s.parse().map_err(serde::de::Error::custom),
            Repr::Int(n) => Ok(Rational::from_integer(n)),
            // Floats go through their shortest decimal representation.
            Repr::Float(x) => format!("{x}").parse().map_err(serde::de::Error::custom),
        }
    }
}
