//! Serde helpers for floats that may legitimately be infinite (norm indices,
//! omega, kappa). JSON has no literal for infinity, so these round-trip
//! non-finite values through the strings "inf", "-inf" and "nan".

#![cfg(feature = "serde")]

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::de::{self, SeqAccess, Visitor};
use serde::{Deserializer, Serializer};

fn encode<S: Serializer>(v: f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(v)
    } else if v.is_nan() {
        s.serialize_str("nan")
    } else if v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

fn decode_str<E: de::Error>(t: &str) -> Result<f64, E> {
    match t {
        "inf" | "+inf" | "Infinity" => Ok(f64::INFINITY),
        "-inf" | "-Infinity" => Ok(f64::NEG_INFINITY),
        "nan" | "NaN" => Ok(f64::NAN),
        _ => t
            .parse::<f64>()
            .map_err(|_| E::custom("expected a float or inf/-inf/nan")),
    }
}

struct MaybeInf;

impl<'de> Visitor<'de> for MaybeInf {
    type Value = f64;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        write!(f, "a float or one of the strings inf/-inf/nan")
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
        Ok(v)
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
        Ok(v as f64)
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
        Ok(v as f64)
    }

    fn visit_str<E: de::Error>(self, t: &str) -> Result<f64, E> {
        decode_str(t)
    }
}

/// `#[serde(with = "crate::serde_util::float")]`
pub mod float {
    use super::*;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        encode(*v, s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        d.deserialize_any(MaybeInf)
    }
}

/// `#[serde(with = "crate::serde_util::float_vec")]`
pub mod float_vec {
    use super::*;
    use serde::ser::SerializeSeq;

    pub fn serialize<S: Serializer>(v: &Vec<f64>, s: S) -> Result<S::Ok, S::Error> {
        struct One(f64);
        impl serde::Serialize for One {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                encode(self.0, s)
            }
        }
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for &x in v {
            seq.serialize_element(&One(x))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        struct VecVisitor;
        impl<'de> Visitor<'de> for VecVisitor {
            type Value = Vec<f64>;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                write!(f, "a sequence of floats or inf/-inf/nan strings")
            }

            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<Vec<f64>, A::Error> {
                #[derive(serde::Deserialize)]
                #[serde(untagged)]
                enum Raw {
                    Num(f64),
                    Text(String),
                }
                let mut out = Vec::new();
                while let Some(raw) = seq.next_element::<Raw>()? {
                    out.push(match raw {
                        Raw::Num(v) => v,
                        Raw::Text(t) => decode_str::<A::Error>(&t)?,
                    });
                }
                Ok(out)
            }
        }
        d.deserialize_seq(VecVisitor)
    }
}
