//! Exact score arithmetic.
//!
//! Scores, human annotations, prices, and their aggregates are kept as exact
//! rationals end to end. Means of integer ratings, cost sums, and band checks
//! therefore never pick up binary floating-point drift; conversion to `f64`
//! happens only at the correlation/report boundary.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// An exact rational number.
///
/// Serialized as a string: an integer (`"3"`), a terminating decimal
/// (`"2.5"`), or a reduced fraction (`"7/3"`) when the decimal does not
/// terminate. All three forms (plus plain JSON/TOML numbers) are accepted on
/// input.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rational(Ratio<i64>);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid rational literal {literal:?}")]
pub struct RationalParseError {
    pub literal: String,
}

impl Rational {
    pub const ZERO: Rational = Rational(Ratio::new_raw(0, 1));
    pub const ONE: Rational = Rational(Ratio::new_raw(1, 1));

    pub fn new(numer: i64, denom: i64) -> Self {
        Rational(Ratio::new(numer, denom))
    }

    pub fn from_integer(v: i64) -> Self {
        Rational(Ratio::from_integer(v))
    }

    pub fn numer(&self) -> i64 {
        *self.0.numer()
    }

    pub fn denom(&self) -> i64 {
        *self.0.denom()
    }

    pub fn abs(&self) -> Self {
        Rational(self.0.abs())
    }

    pub fn is_integer(&self) -> bool {
        self.0.is_integer()
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().expect("i64 ratio is representable as f64")
    }

    /// Rounds half away from zero to the nearest integer.
    pub fn round_half_away_from_zero(&self) -> i64 {
        // Ratio::round already rounds half away from zero.
        *self.0.round().numer()
    }

    /// Mean of a non-empty slice, exact.
    pub fn mean(values: &[Rational]) -> Option<Rational> {
        if values.is_empty() {
            return None;
        }
        let total: Rational = values.iter().copied().sum();
        Some(total / Rational::from_integer(values.len() as i64))
    }

    /// Parses `"3"`, `"-2.5"`, `"7/3"`.
    pub fn parse(text: &str) -> Result<Self, RationalParseError> {
        let s = text.trim();
        let err = || RationalParseError {
            literal: text.to_string(),
        };
        if s.is_empty() {
            return Err(err());
        }
        if let Some((n, d)) = s.split_once('/') {
            let numer: i64 = n.trim().parse().map_err(|_| err())?;
            let denom: i64 = d.trim().parse().map_err(|_| err())?;
            if denom == 0 {
                return Err(err());
            }
            return Ok(Rational::new(numer, denom));
        }
        if let Some((whole, frac)) = s.split_once('.') {
            if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
                return Err(err());
            }
            let negative = whole.starts_with('-');
            let whole_mag: i64 = match whole {
                "" | "-" | "+" => 0,
                w => w.parse::<i64>().map_err(|_| err())?.abs(),
            };
            let scale = 10_i64.checked_pow(frac.len() as u32).ok_or_else(err)?;
            let frac_mag: i64 = frac.parse().map_err(|_| err())?;
            let mag = whole_mag.checked_mul(scale).and_then(|v| v.checked_add(frac_mag)).ok_or_else(err)?;
            let signed = if negative { -mag } else { mag };
            return Ok(Rational::new(signed, scale));
        }
        let v: i64 = s.parse().map_err(|_| err())?;
        Ok(Rational::from_integer(v))
    }

    /// Exact decimal rendering when the reduced denominator is of the form
    /// 2^a·5^b; `None` otherwise.
    fn decimal_string(&self) -> Option<String> {
        let mut d = self.denom();
        let mut twos = 0u32;
        let mut fives = 0u32;
        while d % 2 == 0 {
            d /= 2;
            twos += 1;
        }
        while d % 5 == 0 {
            d /= 5;
            fives += 1;
        }
        if d != 1 {
            return None;
        }
        let places = twos.max(fives);
        if places == 0 {
            return Some(self.numer().to_string());
        }
        let scale = 10_i64.checked_pow(places)?;
        let scaled = self.numer().checked_mul(scale / self.denom())?;
        let sign = if scaled < 0 { "-" } else { "" };
        let mag = scaled.unsigned_abs();
        let whole = mag / scale as u64;
        let frac = mag % scale as u64;
        let mut frac_str = format!("{:0width$}", frac, width = places as usize);
        while frac_str.ends_with('0') {
            frac_str.pop();
        }
        Some(format!("{sign}{whole}.{frac_str}"))
    }

    /// Decimal with at most `places` fractional digits, rounding half away
    /// from zero. Used for report tables where exactness is not required.
    pub fn to_decimal_lossy(&self, places: u32) -> String {
        if let Some(exact) = self.decimal_string() {
            return exact;
        }
        let scale = 10_i64.pow(places);
        let scaled = (*self * Rational::from_integer(scale)).round_half_away_from_zero();
        Rational::new(scaled, scale)
            .decimal_string()
            .unwrap_or_else(|| self.to_f64().to_string())
    }
}

impl Default for Rational {
    fn default() -> Self {
        Rational::ZERO
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.decimal_string() {
            Some(s) => f.write_str(&s),
            None => write!(f, "{}/{}", self.numer(), self.denom()),
        }
    }
}

impl fmt::Debug for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Rational({self})")
    }
}

impl FromStr for Rational {
    type Err = RationalParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Rational::parse(s)
    }
}

impl Add for Rational {
    type Output = Rational;
    fn add(self, rhs: Rational) -> Rational {
        Rational(self.0 + rhs.0)
    }
}

impl AddAssign for Rational {
    fn add_assign(&mut self, rhs: Rational) {
        self.0 += rhs.0;
    }
}

impl Sub for Rational {
    type Output = Rational;
    fn sub(self, rhs: Rational) -> Rational {
        Rational(self.0 - rhs.0)
    }
}

impl Mul for Rational {
    type Output = Rational;
    fn mul(self, rhs: Rational) -> Rational {
        Rational(self.0 * rhs.0)
    }
}

impl Div for Rational {
    type Output = Rational;
    fn div(self, rhs: Rational) -> Rational {
        Rational(self.0 / rhs.0)
    }
}

impl Neg for Rational {
    type Output = Rational;
    fn neg(self) -> Rational {
        Rational(-self.0)
    }
}

impl Sum for Rational {
    fn sum<I: Iterator<Item = Rational>>(iter: I) -> Rational {
        iter.fold(Rational::ZERO, |acc, v| acc + v)
    }
}

impl Zero for Rational {
    fn zero() -> Self {
        Rational::ZERO
    }
    fn is_zero(&self) -> bool {
        self.0.is_zero()
    }
}

impl Serialize for Rational {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Rational {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct V;
        impl serde::de::Visitor<'_> for V {
            type Value = Rational;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a rational as string or number")
            }

            fn visit_str<E: serde::de::Error>(self, v: &str) -> Result<Rational, E> {
                Rational::parse(v).map_err(E::custom)
            }

            fn visit_i64<E: serde::de::Error>(self, v: i64) -> Result<Rational, E> {
                Ok(Rational::from_integer(v))
            }

            fn visit_u64<E: serde::de::Error>(self, v: u64) -> Result<Rational, E> {
                i64::try_from(v)
                    .map(Rational::from_integer)
                    .map_err(E::custom)
            }

            fn visit_f64<E: serde::de::Error>(self, v: f64) -> Result<Rational, E> {
                // Shortest round-trip display recovers the decimal the author
                // wrote for values like 2.33, which is what "exact" means for
                // a dataset file that used a bare number.
                Rational::parse(&v.to_string()).map_err(E::custom)
            }
        }
        deserializer.deserialize_any(V)
    }
}

/// Whether a scale accepts only whole-number ratings or any value in range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    Integer,
    Continuous,
}

/// The numeric range a rating metric is scored on, e.g. 1–3 or 0–100.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreScale {
    pub min: Rational,
    pub max: Rational,
    pub granularity: Granularity,
}

impl ScoreScale {
    pub fn new(min: Rational, max: Rational, granularity: Granularity) -> Option<Self> {
        (min < max).then_some(ScoreScale {
            min,
            max,
            granularity,
        })
    }

    pub fn integer(min: i64, max: i64) -> Self {
        ScoreScale::new(
            Rational::from_integer(min),
            Rational::from_integer(max),
            Granularity::Integer,
        )
        .expect("min < max")
    }

    pub fn contains(&self, value: Rational) -> bool {
        self.min <= value && value <= self.max
    }

    pub fn span(&self) -> Rational {
        self.max - self.min
    }

    pub fn is_valid(&self) -> bool {
        self.min < self.max
    }
}
