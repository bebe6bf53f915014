//! Exact rationals and their `"p/q"` string encoding.
//!
//! Every quantity that ends up in a certificate is a [`Rational`]. Floating
//! point only appears when square roots are unavoidable, and then always
//! together with exact dyadic enclosures from [`sqrt_bounds`].

use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

pub type Rational = BigRational;

pub fn rat(numer: i64, denom: i64) -> Rational {
    Rational::new(BigInt::from(numer), BigInt::from(denom))
}

pub fn int(value: i64) -> Rational {
    Rational::from_integer(BigInt::from(value))
}

pub fn pow2(exp: u32) -> BigInt {
    BigInt::one() << exp as usize
}

/// `2^{-n}`, the measure of a generation-`n` dyadic interval.
pub fn dyadic(n: u32) -> Rational {
    Rational::new(BigInt::one(), pow2(n))
}

/// Parses `"p/q"`, `"p"` or a plain decimal such as `"0.0001"` / `"1e-4"`,
/// all exactly.
pub fn parse_rational(text: &str) -> Result<Rational> {
    let s = text.trim();
    if s.is_empty() {
        return Err(Error::Parse("empty rational".into()));
    }
    if let Some((p, q)) = s.split_once('/') {
        let p = BigInt::from_str(p.trim()).map_err(|e| Error::Parse(format!("{text:?}: {e}")))?;
        let q = BigInt::from_str(q.trim()).map_err(|e| Error::Parse(format!("{text:?}: {e}")))?;
        if q.is_zero() {
            return Err(Error::Parse(format!("{text:?}: zero denominator")));
        }
        return Ok(Rational::new(p, q));
    }
    parse_decimal(s).ok_or_else(|| Error::Parse(format!("{text:?} is not a rational")))
}

fn parse_decimal(s: &str) -> Option<Rational> {
    let (mantissa, exponent) = match s.find(['e', 'E']) {
        Some(pos) => (&s[..pos], s[pos + 1..].parse::<i32>().ok()?),
        None => (s, 0),
    };
    let (negative, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (whole, frac) = digits.split_once('.').unwrap_or((digits, ""));
    if whole.is_empty() && frac.is_empty() {
        return None;
    }
    if !whole.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let all: String = format!("{whole}{frac}");
    let numer = BigInt::from_str(if all.is_empty() { "0" } else { &all }).ok()?;
    let scale = exponent - frac.len() as i32;
    let ten = BigInt::from(10);
    let mut value = Rational::from_integer(numer);
    if scale >= 0 {
        value *= Rational::from_integer(num_traits::pow(ten, scale as usize));
    } else {
        value /= Rational::from_integer(num_traits::pow(ten, (-scale) as usize));
    }
    Some(if negative { -value } else { value })
}

pub fn format_rational(value: &Rational) -> String {
    value.to_string()
}

pub fn to_f64(value: &Rational) -> f64 {
    value.to_f64().unwrap_or(f64::NAN)
}

pub fn from_f64(value: f64) -> Rational {
    Rational::from_float(value).expect("finite float")
}

pub fn abs(value: &Rational) -> Rational {
    value.abs()
}

pub fn max(a: Rational, b: Rational) -> Rational {
    if a >= b {
        a
    } else {
        b
    }
}

/// Rounds to the nearest multiple of `2^{-bits}` (ties away from zero).
pub fn round_dyadic(value: &Rational, bits: u32) -> Rational {
    if value.denom().is_one() {
        return value.clone();
    }
    let scale = pow2(bits);
    let scaled = value * Rational::from_integer(scale.clone());
    if scaled.denom().is_one() {
        return value.clone();
    }
    Rational::new(scaled.round().to_integer(), scale)
}

/// Smallest `k >= 0` with `2^{-k} <= value`, i.e. the number of bits needed
/// to resolve a positive tolerance.
pub fn bits_for(value: &Rational) -> u32 {
    assert!(value.is_positive());
    let mut bits = 0u32;
    let mut threshold = Rational::one();
    while &threshold > value {
        threshold /= int(2);
        bits += 1;
    }
    bits
}

/// Exact dyadic enclosure `lower <= sqrt(value) <= upper`.
///
/// Both ends are exact `f64` values promoted to rationals, so they stay
/// small; the enclosure is verified by squaring in exact arithmetic.
pub fn sqrt_bounds(value: &Rational) -> (Rational, Rational) {
    assert!(!value.is_negative(), "square root of a negative rational");
    if value.is_zero() {
        return (Rational::zero(), Rational::zero());
    }
    if let Some(approx) = value.to_f64().filter(|f| f.is_normal()) {
        let root = approx.sqrt();
        let mut hi = root;
        let upper = loop {
            let candidate = from_f64(hi);
            if &(&candidate * &candidate) >= value {
                break candidate;
            }
            hi = hi.next_up();
        };
        let mut lo = root;
        let lower = loop {
            let candidate = from_f64(lo);
            if &(&candidate * &candidate) <= value {
                break candidate;
            }
            lo = lo.next_down();
        };
        return (lower, upper);
    }
    // Out of f64 range: integer square root of p*q*4^s over q*2^s.
    let shift = 64usize;
    let radicand = (value.numer() * value.denom()) << (2 * shift);
    let root = radicand.sqrt();
    let denom = value.denom() << shift;
    let lower = Rational::new(root.clone(), denom.clone());
    let upper = if &root * &root == radicand {
        lower.clone()
    } else {
        Rational::new(root + 1, denom)
    };
    (lower, upper)
}

/// `ceil(value)` for nonnegative rationals.
pub fn ceil_to_u64(value: &Rational) -> Option<u64> {
    let (q, r) = value.numer().div_rem(value.denom());
    let q = if r.is_positive() { q + 1 } else { q };
    q.to_u64()
}

/// Serde adapter writing a [`Rational`] as a `"p/q"` string.
pub mod serde_rational {
    use serde::{Deserialize, Deserializer, Serializer};

    use super::{format_rational, parse_rational, Rational};

    pub fn serialize<S: Serializer>(value: &Rational, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&format_rational(value))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Rational, D::Error> {
        let text = String::deserialize(deserializer)?;
        parse_rational(&text).map_err(serde::de::Error::custom)
    }
}

/// Serde adapter for `Option<Rational>`.
pub mod serde_rational_opt {
    use serde::{Deserialize, Deserializer, Serializer};

    use super::{format_rational, parse_rational, Rational};

    pub fn serialize<S: Serializer>(
        value: &Option<Rational>,
        serializer: S,
    ) -> Result<S::Ok, S::Error> {
        match value {
            Some(v) => serializer.serialize_some(&format_rational(v)),
            None => serializer.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        deserializer: D,
    ) -> Result<Option<Rational>, D::Error> {
        Option::<String>::deserialize(deserializer)?
            .map(|text| parse_rational(&text).map_err(serde::de::Error::custom))
            .transpose()
    }
}

/// Serde adapter for `Vec<Rational>`.
pub mod serde_rational_vec {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::{format_rational, parse_rational, Rational};

    pub fn serialize<S: Serializer>(values: &[Rational], serializer: S) -> Result<S::Ok, S::Error> {
        values
            .iter()
            .map(format_rational)
            .collect::<Vec<_>>()
            .serialize(serializer)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        deserializer: D,
    ) -> Result<Vec<Rational>, D::Error> {
        Vec::<String>::deserialize(deserializer)?
            .iter()
            .map(|text| parse_rational(text).map_err(serde::de::Error::custom))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_fractions_integers_and_decimals() {
        assert_eq!(parse_rational("3/6").unwrap(), rat(1, 2));
        assert_eq!(parse_rational("-7").unwrap(), int(-7));
        assert_eq!(parse_rational("0.0001").unwrap(), rat(1, 10_000));
        assert_eq!(parse_rational("1e-4").unwrap(), rat(1, 10_000));
        assert_eq!(parse_rational("2.5E1").unwrap(), int(25));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("abc").is_err());
        assert!(parse_rational("").is_err());
    }

    #[test]
    fn display_round_trips() {
        for value in [rat(1, 3), int(0), rat(-22, 7), dyadic(40)] {
            assert_eq!(parse_rational(&format_rational(&value)).unwrap(), value);
        }
    }

    #[test]
    fn sqrt_enclosure_is_tight_and_valid() {
        for value in [int(2), rat(1, 3), rat(9, 4), rat(1, 1 << 40), int(1_000_000_007)] {
            let (lo, hi) = sqrt_bounds(&value);
            assert!(&lo * &lo <= value && &hi * &hi >= value);
            assert!(to_f64(&(&hi - &lo)) <= 1e-15 * to_f64(&hi).max(1.0));
        }
        let (lo, hi) = sqrt_bounds(&rat(9, 4));
        assert_eq!((lo, hi), (rat(3, 2), rat(3, 2)));
    }

    #[test]
    fn sqrt_enclosure_outside_f64_range() {
        let tiny = Rational::new(BigInt::one(), pow2(2000));
        let (lo, hi) = sqrt_bounds(&tiny);
        assert!(&lo * &lo <= tiny && &hi * &hi >= tiny);
    }

    #[test]
    fn rounding_and_bits() {
        assert_eq!(round_dyadic(&rat(1, 3), 2), rat(1, 4));
        assert_eq!(round_dyadic(&rat(3, 8), 10), rat(3, 8));
        assert_eq!(bits_for(&dyadic(40)), 40);
        assert_eq!(bits_for(&rat(1, 3)), 2);
        assert_eq!(ceil_to_u64(&rat(7, 2)), Some(4));
        assert_eq!(ceil_to_u64(&int(3)), Some(3));
    }
}
