//! Exact rational helpers shared across the crate.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::fmt;

pub type Q = BigRational;

pub fn q(n: i64, d: i64) -> Q {
    Q::new(BigInt::from(n), BigInt::from(d))
}

pub fn qi(n: i64) -> Q {
    Q::from_integer(BigInt::from(n))
}

pub fn two() -> Q {
    qi(2)
}

pub fn half() -> Q {
    q(1, 2)
}

/// `2^k` for any integer `k`.
pub fn pow2(k: i64) -> Q {
    let p = BigInt::one() << (k.unsigned_abs() as usize);
    if k >= 0 {
        Q::from_integer(p)
    } else {
        Q::new(BigInt::one(), p)
    }
}

pub fn midpoint(a: &Q, b: &Q) -> Q {
    (a + b) / two()
}

pub fn min_q<'a>(a: &'a Q, b: &'a Q) -> &'a Q {
    if a <= b {
        a
    } else {
        b
    }
}

pub fn max_q<'a>(a: &'a Q, b: &'a Q) -> &'a Q {
    if a >= b {
        a
    } else {
        b
    }
}

/// Round down to a multiple of `2^-bits`.
pub fn floor_dyadic(x: &Q, bits: u32) -> Q {
    let scale = BigInt::one() << bits as usize;
    let n = (x.numer() * &scale).div_floor(x.denom());
    Q::new(n, scale)
}

/// Round up to a multiple of `2^-bits`.
pub fn ceil_dyadic(x: &Q, bits: u32) -> Q {
    let scale = BigInt::one() << bits as usize;
    let n = (x.numer() * &scale).div_ceil(x.denom());
    Q::new(n, scale)
}

/// Round to the nearest multiple of `2^-bits`; ties go down.
pub fn round_dyadic(x: &Q, bits: u32) -> Q {
    let lo = floor_dyadic(x, bits);
    let hi = ceil_dyadic(x, bits);
    if (x - &lo) <= (&hi - x) {
        lo
    } else {
        hi
    }
}

/// Smallest `k >= 0` with `2^-k <= x`, for `x > 0`.
pub fn bits_below(x: &Q) -> u32 {
    let mut k = 0u32;
    let mut p = Q::one();
    while &p > x && k < 4096 {
        p /= two();
        k += 1;
    }
    k
}

pub fn to_f64(x: &Q) -> f64 {
    x.to_f64().unwrap_or_else(|| {
        if x.is_negative() {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        }
    })
}

/// Exact rational value of a finite double.
pub fn from_f64(x: f64) -> Q {
    Q::from_float(x).unwrap_or_else(Q::zero)
}

/// `num/den` for non-integers, `num` for integers.
pub fn fmt_q(x: &Q) -> String {
    if x.is_integer() {
        x.numer().to_string()
    } else {
        format!("{}/{}", x.numer(), x.denom())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed rational literal `{0}`")]
pub struct BadRational(pub String);

/// Parses `-3`, `13/2500`, `0.0052`, `-.5`.  Exponents are rejected so that
/// every accepted literal denotes one exact value.
pub fn parse_q(s: &str) -> Result<Q, BadRational> {
    let bad = || BadRational(s.to_string());
    let t = s.trim();
    let (neg, body) = match t.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, t.strip_prefix('+').unwrap_or(t)),
    };
    if body.is_empty() || body.contains(['e', 'E']) {
        return Err(bad());
    }
    let v = if let Some((n, d)) = body.split_once('/') {
        let n = parse_digits(n).ok_or_else(bad)?;
        let d = parse_digits(d).ok_or_else(bad)?;
        if d.is_zero() {
            return Err(bad());
        }
        Q::new(n, d)
    } else if let Some((ip, fp)) = body.split_once('.') {
        if ip.is_empty() && fp.is_empty() {
            return Err(bad());
        }
        let ip = if ip.is_empty() { BigInt::zero() } else { parse_digits(ip).ok_or_else(bad)? };
        let fpv = if fp.is_empty() { BigInt::zero() } else { parse_digits(fp).ok_or_else(bad)? };
        let scale = num_traits::pow(BigInt::from(10), fp.len());
        Q::new(ip * &scale + fpv, scale)
    } else {
        Q::from_integer(parse_digits(body).ok_or_else(bad)?)
    };
    Ok(if neg { -v } else { v })
}

fn parse_digits(s: &str) -> Option<BigInt> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    s.parse().ok()
}

/// Serde adapter writing rationals as `"num/den"` strings.
pub mod serde_q {
    use super::*;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &Q, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{}/{}", x.numer(), x.denom()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Q, D::Error> {
        let s = String::deserialize(d)?;
        parse_q(&s).map_err(D::Error::custom)
    }
}

pub mod serde_qvec {
    use super::*;
    use serde::{de::Error, ser::SerializeSeq, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(xs: &[Q], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(xs.len()))?;
        for x in xs {
            seq.serialize_element(&format!("{}/{}", x.numer(), x.denom()))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Q>, D::Error> {
        let v = Vec::<String>::deserialize(d)?;
        v.iter().map(|s| parse_q(s).map_err(D::Error::custom)).collect()
    }
}

/// Display wrapper for a rational in `num/den` form.
pub struct Show<'a>(pub &'a Q);

impl fmt::Display for Show<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&fmt_q(self.0))
    }
}

pub fn abs(x: &Q) -> Q {
    x.abs()
}
