//! Exact rational Lebesgue exponents.
//!
//! Exponents arriving from the command line (`--p 7/4`) are kept as exact
//! rationals for all region geometry and only lowered to `f64` inside power
//! evaluations. `p = ∞` is representable; its reciprocal is exactly zero.

use std::fmt;
use std::str::FromStr;

use num::rational::Ratio;
use num::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Exact rational scalar used throughout the exponent geometry.
pub type Rat = Ratio<i128>;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExponentError {
    #[error("invalid exponent {0}: must satisfy p >= 1")]
    InvalidExponent(String),
    #[error("cannot parse rational from {0:?}")]
    ParseRational(String),
}

/// Parse `"a/b"`, `"a"`, or `"inf"` into an exact rational (no `inf` here).
pub fn parse_rat(s: &str) -> Result<Rat, ExponentError> {
    let s = s.trim();
    let make_err = || ExponentError::ParseRational(s.to_string());
    match s.split_once('/') {
        Some((num, den)) => {
            let n = i128::from_str(num.trim()).map_err(|_| make_err())?;
            let d = i128::from_str(den.trim()).map_err(|_| make_err())?;
            if d == 0 {
                return Err(make_err());
            }
            Ok(Rat::new(n, d))
        }
        None => {
            let n = i128::from_str(s).map_err(|_| make_err())?;
            Ok(Rat::from_integer(n))
        }
    }
}

/// A Lebesgue exponent in `[1, ∞]`.
///
/// Serializes as its display string (`"7/4"`, `"2"`, `"inf"`), which is
/// also the accepted CLI and config syntax.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exponent {
    Finite(Rat),
    Infinity,
}

impl Serialize for Exponent {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Exponent {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl Exponent {
    pub fn new(r: Rat) -> Result<Self, ExponentError> {
        if r < Rat::one() {
            return Err(ExponentError::InvalidExponent(r.to_string()));
        }
        Ok(Exponent::Finite(r))
    }

    pub fn from_integer(n: i128) -> Result<Self, ExponentError> {
        Self::new(Rat::from_integer(n))
    }

    /// Reciprocal `1/p`, exactly; `1/∞ = 0`.
    pub fn reciprocal(&self) -> Rat {
        match self {
            Exponent::Finite(r) => r.recip(),
            Exponent::Infinity => Rat::zero(),
        }
    }

    /// Inverse of [`Exponent::reciprocal`]; `0 ↦ ∞`.
    pub fn from_reciprocal(r: Rat) -> Result<Self, ExponentError> {
        if r.is_zero() {
            Ok(Exponent::Infinity)
        } else if r.is_negative() || r > Rat::one() {
            Err(ExponentError::InvalidExponent(format!("1/p = {r}")))
        } else {
            Ok(Exponent::Finite(r.recip()))
        }
    }

    /// Conjugate exponent: `1/p + 1/p' = 1` exactly. `1 ↦ ∞`, `2 ↦ 2`.
    pub fn conjugate(&self) -> Result<Self, ExponentError> {
        Self::from_reciprocal(Rat::one() - self.reciprocal())
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, Exponent::Infinity)
    }

    pub fn as_f64(&self) -> f64 {
        match self {
            Exponent::Finite(r) => rat_to_f64(*r),
            Exponent::Infinity => f64::INFINITY,
        }
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Exponent::Finite(r) => write!(f, "{r}"),
            Exponent::Infinity => write!(f, "inf"),
        }
    }
}

impl FromStr for Exponent {
    type Err = ExponentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("inf") || t.eq_ignore_ascii_case("infinity") || t == "∞" {
            return Ok(Exponent::Infinity);
        }
        Self::new(parse_rat(t)?)
    }
}

pub fn rat_to_f64(r: Rat) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}
