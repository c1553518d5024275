//! Exact rational numbers used for rates, capacities, costs and entropies.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

pub type Rational = BigRational;

pub fn int(v: i64) -> Rational {
    Rational::from_integer(BigInt::from(v))
}

pub fn ratio(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

/// Parses `"3"`, `"-1.25"` or `"7/4"` into an exact rational.
pub fn parse_rational(text: &str) -> Result<Rational> {
    let s = text.trim();
    let bad = || Error::Parse(format!("`{text}` is not a rational number"));
    if s.is_empty() {
        return Err(bad());
    }
    if let Some((num, den)) = s.split_once('/') {
        let n: BigInt = num.trim().parse().map_err(|_| bad())?;
        let d: BigInt = den.trim().parse().map_err(|_| bad())?;
        if d.is_zero() {
            return Err(bad());
        }
        return Ok(Rational::new(n, d));
    }
    let (negative, body) = match s.as_bytes()[0] {
        b'-' => (true, &s[1..]),
        b'+' => (false, &s[1..]),
        _ => (false, s),
    };
    let (whole, frac) = body.split_once('.').unwrap_or((body, ""));
    if whole.is_empty() && frac.is_empty() {
        return Err(bad());
    }
    if !whole
        .bytes()
        .chain(frac.bytes())
        .all(|b| b.is_ascii_digit())
    {
        return Err(bad());
    }
    let digits = format!("{whole}{frac}");
    let n: BigInt = digits.parse().map_err(|_| bad())?;
    let d = num_traits::pow(BigInt::from(10u32), frac.len());
    let value = Rational::new(n, d);
    Ok(if negative { -value } else { value })
}

pub fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        if r.is_negative() {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        }
    })
}

/// Exact conversion of a finite float.
pub fn from_f64(x: f64) -> Rational {
    Rational::from_float(x).unwrap_or_else(Rational::zero)
}

/// Rounds `x` to the nearest multiple of `2^-bits`.
pub fn round_to_dyadic(x: f64, bits: u32) -> Rational {
    let scale = (bits as f64).exp2();
    let n = (x * scale).round();
    Rational::new(
        BigInt::from(n as i128),
        num_traits::pow(BigInt::from(2u32), bits as usize),
    )
}

pub fn is_integral(r: &Rational) -> bool {
    r.denom().is_one()
}

pub fn sum<'a>(values: impl IntoIterator<Item = &'a Rational>) -> Rational {
    values.into_iter().fold(Rational::zero(), |acc, v| acc + v)
}

/// Serde adapter writing rationals as `"p/q"` strings (integers as `"p"`).
pub mod serde_string {
    use super::{parse_rational, Rational};
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &Rational, ser: S) -> Result<S::Ok, S::Error> {
        ser.serialize_str(&value.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Rational, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Int(i64),
            Float(f64),
        }
        match Raw::deserialize(de)? {
            Raw::Text(s) => parse_rational(&s).map_err(de::Error::custom),
            Raw::Int(i) => Ok(super::int(i)),
            Raw::Float(f) => parse_rational(&f.to_string()).map_err(de::Error::custom),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_notations() {
        assert_eq!(parse_rational("4").unwrap(), int(4));
        assert_eq!(parse_rational("0.25").unwrap(), ratio(1, 4));
        assert_eq!(parse_rational("-1.5").unwrap(), ratio(-3, 2));
        assert_eq!(parse_rational("6/4").unwrap(), ratio(3, 2));
        assert_eq!(parse_rational(".5").unwrap(), ratio(1, 2));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("abc").is_err());
        assert!(parse_rational("").is_err());
        assert!(parse_rational("1e3").is_err());
    }

    #[test]
    fn dyadic_rounding() {
        assert_eq!(round_to_dyadic(0.5, 40), ratio(1, 2));
        let r = round_to_dyadic(std::f64::consts::PI, 40);
        assert!((to_f64(&r) - std::f64::consts::PI).abs() < 1e-12);
    }
}
