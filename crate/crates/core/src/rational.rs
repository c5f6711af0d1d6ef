//! Exact rationals and a few helpers used throughout.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

pub type Q = BigRational;

pub fn q(n: i64, d: i64) -> Q {
    Q::new(BigInt::from(n), BigInt::from(d))
}

pub fn qi(n: i64) -> Q {
    Q::from_integer(BigInt::from(n))
}

pub fn is_pos(x: &Q) -> bool {
    x.is_positive()
}

/// Scale so that the entries sum to one. Panics on an empty or zero-sum input.
pub fn projectivize(xs: &[Q]) -> Vec<Q> {
    let s: Q = xs.iter().fold(Q::zero(), |a, b| a + b);
    assert!(!s.is_zero(), "projectivize: zero sum");
    xs.iter().map(|x| x / &s).collect()
}

pub fn sum(xs: impl IntoIterator<Item = Q>) -> Q {
    xs.into_iter().fold(Q::zero(), |a, b| a + b)
}

pub fn to_f64(x: &Q) -> f64 {
    use num_traits::ToPrimitive;
    x.to_f64().unwrap_or(f64::NAN)
}

/// Serializable form `[numerator, denominator]` as decimal strings.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QJson(pub String, pub String);

impl From<&Q> for QJson {
    fn from(x: &Q) -> Self {
        QJson(x.numer().to_string(), x.denom().to_string())
    }
}

impl QJson {
    pub fn to_q(&self) -> crate::Result<Q> {
        let n: BigInt = self
            .0
            .parse()
            .map_err(|_| crate::Error::Structure(format!("bad numerator {}", self.0)))?;
        let d: BigInt = self
            .1
            .parse()
            .map_err(|_| crate::Error::Structure(format!("bad denominator {}", self.1)))?;
        if d.is_zero() {
            return Err(crate::Error::Structure("zero denominator".into()));
        }
        Ok(Q::new(n, d))
    }
}

pub fn one() -> Q {
    Q::one()
}
