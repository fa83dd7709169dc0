//! Exact time values.
//!
//! All schedule arithmetic is done on rationals so that max-plus evaluation and
//! the conformance inequalities compare exactly. A [`Time`] is a count of model
//! time units; wall-clock quantities written with a unit suffix (`"1.6ms"`) are
//! converted through a [`TimeUnit`] that states how long one model unit lasts.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};
use std::str::FromStr;
use std::time::Duration;

use num_rational::Ratio;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TimeError {
    #[error("malformed time value `{0}`")]
    Malformed(String),
    #[error("unknown time unit suffix `{0}`")]
    UnknownUnit(String),
    #[error("time value `{0}` is out of range")]
    Overflow(String),
}

/// A point or span on the model time axis, in model units.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Time(Ratio<i128>);

impl Time {
    pub const ZERO: Time = Time(Ratio::new_raw(0, 1));

    pub fn from_integer(v: i64) -> Self {
        Time(Ratio::from_integer(v as i128))
    }

    /// `num / den` model units. Panics if `den` is zero.
    pub fn from_ratio(num: i64, den: i64) -> Self {
        Time(Ratio::new(num as i128, den as i128))
    }

    pub fn ratio(&self) -> Ratio<i128> {
        self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn to_f64(&self) -> f64 {
        *self.0.numer() as f64 / *self.0.denom() as f64
    }

    pub fn max(self, other: Time) -> Time {
        std::cmp::max(self, other)
    }

    pub fn min(self, other: Time) -> Time {
        std::cmp::min(self, other)
    }

    /// `self * k`, for dimensionless factors given as times.
    pub fn scaled(self, k: Time) -> Time {
        Time(self.0 * k.0)
    }

    /// Parses a plain value in model units: `"3"`, `"0.25"`, `"-1.5"` or `"3/4"`.
    pub fn parse_plain(s: &str) -> Result<Time, TimeError> {
        parse_number(s.trim()).map(Time)
    }

    /// Parses a value that may carry a wall-clock suffix (`s`, `ms`, `us`, `ns`).
    /// Unsuffixed values are model units.
    pub fn parse_in(s: &str, unit: TimeUnit) -> Result<Time, TimeError> {
        let s = s.trim();
        let split = s
            .find(|c: char| c.is_ascii_alphabetic() || c == 'µ')
            .unwrap_or(s.len());
        let (num, suffix) = s.split_at(split);
        let value = parse_number(num.trim())?;
        if suffix.is_empty() {
            return Ok(Time(value));
        }
        let ns_per = match suffix {
            "s" => 1_000_000_000,
            "ms" => 1_000_000,
            "us" | "µs" => 1_000,
            "ns" => 1,
            other => return Err(TimeError::UnknownUnit(other.to_string())),
        };
        Ok(Time(value * Ratio::from_integer(ns_per) / unit.nanos))
    }

    /// Wall-clock length of this many model units. Negative values clamp to zero.
    pub fn to_duration(&self, unit: TimeUnit) -> Duration {
        let ns = (self.0 * unit.nanos).max(Ratio::zero());
        let whole = ns.to_integer().to_u64().unwrap_or(u64::MAX);
        Duration::from_nanos(whole)
    }

    pub fn from_duration(d: Duration, unit: TimeUnit) -> Time {
        Time(Ratio::from_integer(d.as_nanos() as i128) / unit.nanos)
    }

    /// Exact decimal rendering when the denominator allows it, `p/q` otherwise.
    pub fn to_exact_string(&self) -> String {
        let r = self.0.reduced();
        let mut den = *r.denom();
        let (mut twos, mut fives) = (0u32, 0u32);
        while den % 2 == 0 {
            den /= 2;
            twos += 1;
        }
        while den % 5 == 0 {
            den /= 5;
            fives += 1;
        }
        if den != 1 {
            return format!("{}/{}", r.numer(), r.denom());
        }
        let digits = twos.max(fives);
        if digits == 0 {
            return r.numer().to_string();
        }
        let scale = 10i128.pow(digits);
        let scaled = r.numer() * (scale / r.denom());
        let sign = if scaled < 0 { "-" } else { "" };
        let abs = scaled.abs();
        let int = abs / scale;
        let frac = abs % scale;
        let mut frac_s = format!("{:0width$}", frac, width = digits as usize);
        while frac_s.ends_with('0') {
            frac_s.pop();
        }
        format!("{sign}{int}.{frac_s}")
    }
}

fn parse_number(s: &str) -> Result<Ratio<i128>, TimeError> {
    let bad = || TimeError::Malformed(s.to_string());
    if s.is_empty() {
        return Err(bad());
    }
    if let Some((n, d)) = s.split_once('/') {
        let n: i128 = n.trim().parse().map_err(|_| bad())?;
        let d: i128 = d.trim().parse().map_err(|_| bad())?;
        if d == 0 {
            return Err(bad());
        }
        return Ok(Ratio::new(n, d));
    }
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    if int.is_empty() && frac.is_empty() {
        return Err(bad());
    }
    if !int.chars().all(|c| c.is_ascii_digit()) || !frac.chars().all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    if frac.len() > 30 {
        return Err(TimeError::Overflow(s.to_string()));
    }
    let digits = format!("{int}{frac}");
    let numer: i128 = if digits.is_empty() {
        0
    } else {
        digits
            .parse()
            .map_err(|_| TimeError::Overflow(s.to_string()))?
    };
    let denom = 10i128
        .checked_pow(frac.len() as u32)
        .ok_or_else(|| TimeError::Overflow(s.to_string()))?;
    let v = Ratio::new(numer, denom);
    Ok(if neg { -v } else { v })
}

impl fmt::Display for Time {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_exact_string())
    }
}

impl fmt::Debug for Time {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Time({})", self.to_exact_string())
    }
}

impl FromStr for Time {
    type Err = TimeError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Time::parse_plain(s)
    }
}

impl Add for Time {
    type Output = Time;
    fn add(self, rhs: Time) -> Time {
        Time(self.0 + rhs.0)
    }
}

impl AddAssign for Time {
    fn add_assign(&mut self, rhs: Time) {
        self.0 = self.0 + rhs.0;
    }
}

impl Sub for Time {
    type Output = Time;
    fn sub(self, rhs: Time) -> Time {
        Time(self.0 - rhs.0)
    }
}

impl Neg for Time {
    type Output = Time;
    fn neg(self) -> Time {
        Time(-self.0)
    }
}

impl Mul<Ratio<i128>> for Time {
    type Output = Time;
    fn mul(self, rhs: Ratio<i128>) -> Time {
        Time(self.0 * rhs)
    }
}

impl std::iter::Sum for Time {
    fn sum<I: Iterator<Item = Time>>(iter: I) -> Time {
        iter.fold(Time::ZERO, |a, b| a + b)
    }
}

impl Serialize for Time {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_exact_string())
    }
}

impl<'de> Deserialize<'de> for Time {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = NumOrString::deserialize(d)?;
        let s = match raw {
            NumOrString::Str(s) => s,
            NumOrString::Int(i) => i.to_string(),
        };
        Time::parse_plain(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum NumOrString {
    Int(i64),
    Str(String),
}

/// Length of one model time unit on the wall clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeUnit {
    nanos: Ratio<i128>,
}

impl TimeUnit {
    pub const MILLISECOND: TimeUnit = TimeUnit {
        nanos: Ratio::new_raw(1_000_000, 1),
    };

    /// Parses a unit definition such as `"1ms"` or `"0.5s"`. A bare number is
    /// taken as milliseconds.
    pub fn parse(s: &str) -> Result<TimeUnit, TimeError> {
        let t = Time::parse_in(s, TimeUnit::MILLISECOND)?;
        if t <= Time::ZERO {
            return Err(TimeError::Malformed(s.to_string()));
        }
        Ok(TimeUnit {
            nanos: t.0 * Ratio::from_integer(1_000_000),
        })
    }

    pub fn nanos(&self) -> Ratio<i128> {
        self.nanos
    }
}

impl Default for TimeUnit {
    fn default() -> Self {
        TimeUnit::MILLISECOND
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_decimals_exactly() {
        assert_eq!(Time::parse_plain("1.6").unwrap(), Time::from_ratio(8, 5));
        assert_eq!(Time::parse_plain("0.05").unwrap(), Time::from_ratio(1, 20));
        assert_eq!(Time::parse_plain("-2").unwrap(), Time::from_integer(-2));
        assert_eq!(Time::parse_plain("3/4").unwrap(), Time::from_ratio(3, 4));
        assert_eq!(Time::parse_plain(".5").unwrap(), Time::from_ratio(1, 2));
        assert!(Time::parse_plain("1.2.3").is_err());
        assert!(Time::parse_plain("").is_err());
        assert!(Time::parse_plain("abc").is_err());
    }

    #[test]
    fn unit_suffixes_scale_against_model_unit() {
        let ms = TimeUnit::MILLISECOND;
        assert_eq!(Time::parse_in("1.6ms", ms).unwrap(), Time::from_ratio(8, 5));
        assert_eq!(Time::parse_in("2s", ms).unwrap(), Time::from_integer(2000));
        assert_eq!(Time::parse_in("500us", ms).unwrap(), Time::from_ratio(1, 2));
        assert_eq!(Time::parse_in("7", ms).unwrap(), Time::from_integer(7));
        let ten_ms = TimeUnit::parse("10ms").unwrap();
        assert_eq!(
            Time::parse_in("25ms", ten_ms).unwrap(),
            Time::from_ratio(5, 2)
        );
        assert!(matches!(
            Time::parse_in("3h", ms),
            Err(TimeError::UnknownUnit(_))
        ));
    }

    #[test]
    fn renders_exact_strings() {
        assert_eq!(Time::from_ratio(8, 5).to_string(), "1.6");
        assert_eq!(Time::from_ratio(-1, 8).to_string(), "-0.125");
        assert_eq!(Time::from_ratio(1, 3).to_string(), "1/3");
        assert_eq!(Time::from_integer(12).to_string(), "12");
        assert_eq!(Time::ZERO.to_string(), "0");
    }

    #[test]
    fn duration_round_trip() {
        let unit = TimeUnit::parse("1ms").unwrap();
        let t = Time::from_ratio(3, 2);
        assert_eq!(t.to_duration(unit), Duration::from_micros(1500));
        assert_eq!(Time::from_duration(Duration::from_micros(1500), unit), t);
    }

    proptest::proptest! {
        #[test]
        fn string_form_round_trips(n in -100_000i64..100_000, d in 1i64..2000) {
            let t = Time::from_ratio(n, d);
            let back = Time::parse_plain(&t.to_exact_string()).unwrap();
            proptest::prop_assert_eq!(back, t);
        }
    }
}
