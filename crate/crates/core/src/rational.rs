//! Exact rational scalars and their textual form.

use std::fmt;

use num_rational::Ratio;
use num_traits::{Signed, Zero};
use serde::de::{self, Deserializer, Visitor};
use serde::Serializer;

pub type Q = Ratio<i64>;

pub fn q(n: i64) -> Q {
    Q::from_integer(n)
}

pub fn qr(n: i64, d: i64) -> Q {
    Q::new(n, d)
}

/// Parses `p`, `p/q` or a finite decimal such as `0.5`.
pub fn parse_q(s: &str) -> Result<Q, String> {
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n: i64 = n.trim().parse().map_err(|_| format!("bad rational `{s}`"))?;
        let d: i64 = d.trim().parse().map_err(|_| format!("bad rational `{s}`"))?;
        if d == 0 {
            return Err(format!("zero denominator in `{s}`"));
        }
        return Ok(Q::new(n, d));
    }
    if let Some((int, frac)) = s.split_once('.') {
        let neg = int.starts_with('-');
        let int_part: i64 = if int.is_empty() || int == "-" {
            0
        } else {
            int.parse().map_err(|_| format!("bad rational `{s}`"))?
        };
        if frac.is_empty() || !frac.chars().all(|c| c.is_ascii_digit()) || frac.len() > 12 {
            return Err(format!("bad rational `{s}`"));
        }
        let den = 10i64.pow(frac.len() as u32);
        let num: i64 = frac.parse().map_err(|_| format!("bad rational `{s}`"))?;
        let mag = Q::new(int_part.abs() * den + num, den);
        return Ok(if neg { -mag } else { mag });
    }
    s.parse::<i64>().map(q).map_err(|_| format!("bad rational `{s}`"))
}

pub fn fmt_q(x: &Q) -> String {
    if x.is_integer() {
        x.numer().to_string()
    } else {
        format!("{}/{}", x.numer(), x.denom())
    }
}

pub fn to_f64(x: &Q) -> f64 {
    *x.numer() as f64 / *x.denom() as f64
}

pub fn abs_q(x: Q) -> Q {
    x.abs()
}

pub fn max_q(a: Q, b: Q) -> Q {
    if a >= b {
        a
    } else {
        b
    }
}

/// Half of an exact value; used for Gromov products and midpoints.
pub fn half(x: Q) -> Q {
    x / q(2)
}

pub fn is_zero(x: &Q) -> bool {
    x.is_zero()
}

/// Rounds to the nearest integer with ties toward negative infinity.
pub fn round_half_down(x: &Q) -> i64 {
    let fl = x.floor().to_integer();
    let frac = *x - q(fl);
    let halfway = Q::new(1, 2);
    if frac > halfway {
        fl + 1
    } else {
        fl
    }
}

/// Serde adapter writing rationals as `p/q` strings.
pub mod serde_q {
    use super::*;

    pub fn serialize<S: Serializer>(x: &Q, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&fmt_q(x))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Q, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = Q;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a rational as integer or `p/q` string")
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Q, E> {
                Ok(q(v))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Q, E> {
                i64::try_from(v).map(q).map_err(E::custom)
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Q, E> {
                parse_q(&format!("{v}")).map_err(E::custom)
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Q, E> {
                parse_q(v).map_err(E::custom)
            }
        }
        d.deserialize_any(V)
    }
}

pub mod serde_q_opt {
    use super::*;
    use serde::{Deserialize, Serialize};

    #[derive(Serialize, Deserialize)]
    struct W(#[serde(with = "super::serde_q")] Q);

    pub fn serialize<S: Serializer>(x: &Option<Q>, s: S) -> Result<S::Ok, S::Error> {
        x.map(W).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Q>, D::Error> {
        Ok(Option::<W>::deserialize(d)?.map(|w| w.0))
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
        use serde::Deserialize;
        let raw = Vec::<String>::deserialize(d)?;
        raw.iter().map(|s| parse_q(s).map_err(de::Error::custom)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_forms() {
        assert_eq!(parse_q("3").unwrap(), q(3));
        assert_eq!(parse_q("7/2").unwrap(), qr(7, 2));
        assert_eq!(parse_q("-0.25").unwrap(), qr(-1, 4));
        assert_eq!(parse_q("0.5").unwrap(), qr(1, 2));
        assert!(parse_q("1/0").is_err());
        assert!(parse_q("x").is_err());
    }

    #[test]
    fn rounding_ties_go_down() {
        assert_eq!(round_half_down(&qr(5, 2)), 2);
        assert_eq!(round_half_down(&qr(-5, 2)), -3);
        assert_eq!(round_half_down(&qr(7, 3)), 2);
        assert_eq!(round_half_down(&qr(8, 3)), 3);
        assert_eq!(round_half_down(&q(4)), 4);
    }

    #[test]
    fn formatting() {
        assert_eq!(fmt_q(&qr(6, 4)), "3/2");
        assert_eq!(fmt_q(&q(-2)), "-2");
    }
}
