//! Exact rational helpers shared by the combinatorial layers.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serializer};
use std::cmp::Ordering;

/// Exact rational number.
pub type Q = BigRational;

/// Global tolerance for floating-point boundary comparisons.
pub const TAU: f64 = 1e-9;

pub fn q_int(n: i64) -> Q {
    Q::from_integer(BigInt::from(n))
}

pub fn q_frac(n: i64, d: i64) -> Q {
    Q::new(BigInt::from(n), BigInt::from(d))
}

/// Exact value of a finite double.
pub fn q_from_f64(x: f64) -> Q {
    Q::from_float(x).expect("finite float")
}

pub fn q_to_f64(x: &Q) -> f64 {
    if let Some(v) = x.to_f64() {
        if v.is_finite() {
            return v;
        }
    }
    // Very large numerators/denominators: fall back to a bit-length estimate.
    let n = x.numer();
    let d = x.denom();
    let shift = n.bits() as i64 - d.bits() as i64;
    let scale = 60i64;
    let (nn, dd) = if shift > 0 {
        (n.clone(), d.clone() << (shift as u64))
    } else {
        (n.clone() << ((-shift) as u64), d.clone())
    };
    let ratio = Q::new(nn << scale as u64, dd).to_integer();
    let mant = ratio.to_f64().unwrap_or(f64::NAN) / 2f64.powi(scale as i32);
    mant * 2f64.powf(shift as f64)
}

/// Natural logarithm of a positive rational, robust to huge magnitudes.
pub fn q_ln(x: &Q) -> f64 {
    fn big_ln(n: &BigInt) -> f64 {
        let bits = n.bits();
        if bits <= 1000 {
            return n.to_f64().unwrap_or(f64::NAN).ln();
        }
        let shift = bits - 60;
        let top = (n >> shift).to_f64().unwrap_or(f64::NAN);
        top.ln() + shift as f64 * std::f64::consts::LN_2
    }
    big_ln(x.numer()) - big_ln(x.denom())
}

/// `base^exp` for a non-negative integer exponent.
pub fn q_pow(base: &Q, exp: u64) -> Q {
    let mut result = Q::one();
    let mut b = base.clone();
    let mut e = exp;
    while e > 0 {
        if e & 1 == 1 {
            result *= &b;
        }
        b = &b * &b;
        e >>= 1;
    }
    result
}

pub fn q_floor_u64(x: &Q) -> u64 {
    x.floor().to_integer().to_u64().unwrap_or(0)
}

pub fn q_ceil_u64(x: &Q) -> u64 {
    x.ceil().to_integer().to_u64().unwrap_or(u64::MAX)
}

/// Parses `"3"`, `"-3/4"` or a decimal such as `"0.125"` exactly.
pub fn parse_q(s: &str) -> Result<Q, String> {
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| format!("bad rational `{s}`"))?;
        let d: BigInt = d.trim().parse().map_err(|_| format!("bad rational `{s}`"))?;
        if d.is_zero() {
            return Err(format!("zero denominator in `{s}`"));
        }
        return Ok(Q::new(n, d));
    }
    if let Some((ip, fp)) = s.split_once('.') {
        let neg = ip.starts_with('-');
        let ip_abs = ip.trim_start_matches('-');
        let digits = format!("{}{}", if ip_abs.is_empty() { "0" } else { ip_abs }, fp);
        let n: BigInt = digits.parse().map_err(|_| format!("bad decimal `{s}`"))?;
        let d = num_traits::pow(BigInt::from(10), fp.len());
        let v = Q::new(n, d);
        return Ok(if neg { -v } else { v });
    }
    let n: BigInt = s.parse().map_err(|_| format!("bad rational `{s}`"))?;
    Ok(Q::from_integer(n))
}

pub fn fmt_q(x: &Q) -> String {
    if x.denom().is_one() {
        x.numer().to_string()
    } else {
        format!("{}/{}", x.numer(), x.denom())
    }
}

/// Compares `a` and `b` using the float estimates when they are clearly
/// separated and the exact values otherwise.
pub fn cmp_fast(a_est: f64, b_est: f64, rel_err: f64, exact: impl FnOnce() -> Ordering) -> Ordering {
    if a_est.is_finite() && b_est.is_finite() {
        let tol = rel_err * (a_est.abs() + b_est.abs()) + f64::MIN_POSITIVE;
        if a_est - b_est > tol {
            return Ordering::Greater;
        }
        if b_est - a_est > tol {
            return Ordering::Less;
        }
    }
    exact()
}

pub fn q_abs(x: &Q) -> Q {
    x.abs()
}

pub mod serde_q {
    use super::*;

    pub fn serialize<S: Serializer>(x: &Q, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&fmt_q(x))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Q, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        match v {
            serde_json::Value::String(s) => parse_q(&s).map_err(serde::de::Error::custom),
            serde_json::Value::Number(n) => parse_q(&n.to_string()).map_err(serde::de::Error::custom),
            other => Err(serde::de::Error::custom(format!("expected rational, got {other}"))),
        }
    }
}

pub mod serde_q_vec {
    use super::*;
    use serde::ser::SerializeSeq;

    pub fn serialize<S: Serializer>(xs: &[Q], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(xs.len()))?;
        for x in xs {
            seq.serialize_element(&fmt_q(x))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Q>, D::Error> {
        let v: Vec<serde_json::Value> = Vec::deserialize(d)?;
        v.into_iter()
            .map(|x| match x {
                serde_json::Value::String(s) => parse_q(&s).map_err(serde::de::Error::custom),
                serde_json::Value::Number(n) => {
                    parse_q(&n.to_string()).map_err(serde::de::Error::custom)
                }
                other => Err(serde::de::Error::custom(format!("expected rational, got {other}"))),
            })
            .collect()
    }
}
