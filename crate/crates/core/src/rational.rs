//! Exact rationals and their string encoding.
//!
//! Every length, offset and mass in the crate is a [`Q`]. On the wire a
//! rational is either a JSON integer or a string `"p/q"` (also `"p"`).

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::de::{self, Visitor};
use serde::{Deserializer, Serializer};

pub type Q = BigRational;

pub fn q(n: i64) -> Q {
    Q::from_integer(BigInt::from(n))
}

pub fn qr(n: i64, d: i64) -> Q {
    Q::new(BigInt::from(n), BigInt::from(d))
}

pub fn zero() -> Q {
    Q::zero()
}

pub fn one() -> Q {
    Q::one()
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed rational {0:?}")]
pub struct ParseRationalError(pub String);

pub fn parse_q(s: &str) -> Result<Q, ParseRationalError> {
    let err = || ParseRationalError(s.to_string());
    let s = s.trim();
    match s.split_once('/') {
        Some((n, d)) => {
            let n: BigInt = n.trim().parse().map_err(|_| err())?;
            let d: BigInt = d.trim().parse().map_err(|_| err())?;
            if d.is_zero() {
                return Err(err());
            }
            Ok(Q::new(n, d))
        }
        None => Ok(Q::from_integer(s.parse().map_err(|_| err())?)),
    }
}

/// `"p/q"`, or `"p"` for integers.
pub fn fmt_q(x: &Q) -> String {
    if x.is_integer() {
        x.numer().to_string()
    } else {
        format!("{}/{}", x.numer(), x.denom())
    }
}

/// Lossy conversion for reporting only.
pub fn to_f64(x: &Q) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

pub fn abs(x: &Q) -> Q {
    x.abs()
}

/// Smallest integer `>= x`.
pub fn ceil_int(x: &Q) -> BigInt {
    x.ceil().to_integer()
}

/// Largest integer `<= x`.
pub fn floor_int(x: &Q) -> BigInt {
    x.floor().to_integer()
}

/// Integer value of a rational known to be integral and small.
pub fn to_i64(x: &Q) -> Option<i64> {
    if x.is_integer() {
        x.numer().to_i64()
    } else {
        None
    }
}

pub fn lcm_denominators<'a>(xs: impl IntoIterator<Item = &'a Q>) -> BigInt {
    use num_integer::Integer;
    xs.into_iter()
        .fold(BigInt::one(), |acc, x| acc.lcm(x.denom()))
}

/// Serde adapter: rationals as `"p/q"` strings, accepting integers on input.
pub mod serde_q {
    use super::*;

    pub fn serialize<S: Serializer>(x: &Q, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&fmt_q(x))
    }

    struct QVisitor;

    impl<'de> Visitor<'de> for QVisitor {
        type Value = Q;

        fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
            f.write_str("an integer or a \"p/q\" string")
        }

        fn visit_i64<E: de::Error>(self, v: i64) -> Result<Q, E> {
            Ok(q(v))
        }

        fn visit_u64<E: de::Error>(self, v: u64) -> Result<Q, E> {
            Ok(Q::from_integer(BigInt::from(v)))
        }

        fn visit_str<E: de::Error>(self, v: &str) -> Result<Q, E> {
            parse_q(v).map_err(E::custom)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Q, D::Error> {
        d.deserialize_any(QVisitor)
    }
}
