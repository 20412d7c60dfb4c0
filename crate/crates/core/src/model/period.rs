use num_integer::Integer;
pub use num_rational::Rational64 as Rational;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `tau = m2 * tau1 = m1 * tau2`, the smallest common period of two periodic drifts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommonPeriod {
    #[serde(with = "rational_str")]
    pub tau: Rational,
    pub m1: i64,
    pub m2: i64,
}

impl CommonPeriod {
    pub fn tau_f64(&self) -> f64 {
        to_f64(self.tau)
    }
}

pub fn to_f64(r: Rational) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

pub fn common_period(tau1: Rational, tau2: Rational) -> Result<CommonPeriod> {
    if *tau1.numer() <= 0 || *tau2.numer() <= 0 {
        return Err(Error::domain(format!(
            "periods must be positive, got {tau1} and {tau2}"
        )));
    }
    // Ratio keeps both reduced with positive denominators.
    let tau = Rational::new(tau1.numer().lcm(tau2.numer()), tau1.denom().gcd(tau2.denom()));
    let m2 = tau / tau1;
    let m1 = tau / tau2;
    debug_assert!(m1.is_integer() && m2.is_integer());
    Ok(CommonPeriod {
        tau,
        m1: m1.to_integer(),
        m2: m2.to_integer(),
    })
}

/// Rationals serialized as `"p/q"` (or `"p"` when integral).
pub mod rational_str {
    use super::Rational;
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Rational, s: S) -> Result<S::Ok, S::Error> {
        if r.is_integer() {
            s.serialize_str(&r.numer().to_string())
        } else {
            s.serialize_str(&format!("{}/{}", r.numer(), r.denom()))
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        let raw = String::deserialize(d)?;
        parse(&raw).map_err(D::Error::custom)
    }

    pub fn parse(raw: &str) -> Result<Rational, String> {
        let trimmed = raw.trim();
        let (num, den) = match trimmed.split_once('/') {
            Some((n, d)) => (n.trim(), d.trim()),
            None => (trimmed, "1"),
        };
        let num: i64 = num
            .parse()
            .map_err(|_| format!("invalid rational {raw:?}: expected \"p/q\""))?;
        let den: i64 = den
            .parse()
            .map_err(|_| format!("invalid rational {raw:?}: expected \"p/q\""))?;
        if den == 0 {
            return Err(format!("invalid rational {raw:?}: zero denominator"));
        }
        Ok(Rational::new(num, den))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn r(n: i64, d: i64) -> Rational {
        Rational::new(n, d)
    }

    #[test]
    fn examples() {
        let p = common_period(r(2, 1), r(3, 1)).unwrap();
        assert_eq!((p.tau, p.m1, p.m2), (r(6, 1), 2, 3));
        let p = common_period(r(1, 2), r(1, 3)).unwrap();
        assert_eq!((p.tau, p.m1, p.m2), (r(1, 1), 3, 2));
        let p = common_period(r(5, 7), r(5, 7)).unwrap();
        assert_eq!((p.tau, p.m1, p.m2), (r(5, 7), 1, 1));
        assert!(common_period(r(0, 1), r(1, 1)).is_err());
        assert!(common_period(r(-1, 2), r(1, 1)).is_err());
    }

    #[test]
    fn parses_strings() {
        assert_eq!(rational_str::parse("1/2").unwrap(), r(1, 2));
        assert_eq!(rational_str::parse(" 3 ").unwrap(), r(3, 1));
        assert_eq!(rational_str::parse("4/6").unwrap(), r(2, 3));
        assert!(rational_str::parse("1/0").is_err());
        assert!(rational_str::parse("0.5").is_err());
    }

    proptest! {
        // Enumeration oracle: smallest m2 with m2 * tau1 an integer multiple of tau2.
        #[test]
        fn matches_enumeration(n1 in 1i64..40, d1 in 1i64..40, n2 in 1i64..40, d2 in 1i64..40) {
            let (t1, t2) = (r(n1, d1), r(n2, d2));
            let p = common_period(t1, t2).unwrap();
            let m2 = (1..).find(|m| (t1 * r(*m, 1) / t2).is_integer()).unwrap();
            prop_assert_eq!(p.m2, m2);
            prop_assert_eq!(p.tau, t1 * r(m2, 1));
            prop_assert_eq!(p.tau, t2 * r(p.m1, 1));
        }
    }
}
