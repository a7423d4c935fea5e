use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// Serde adapter for `f64` fields that may be infinite: `+∞` is written as
/// the string `"inf"` (and `−∞` as `"-inf"`), finite values as numbers.
pub mod inf_f64 {
    use serde::de::{self, Deserializer, Visitor};
    use serde::Serializer;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_str(if *v > 0.0 { "inf" } else { "-inf" })
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = f64;
            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a number or \"inf\"")
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
            fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
                match v {
                    "inf" => Ok(f64::INFINITY),
                    "-inf" => Ok(f64::NEG_INFINITY),
                    other => Err(E::custom(format!("expected \"inf\", found \"{other}\""))),
                }
            }
        }
        d.deserialize_any(V)
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &to_json_string(value)?)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use serde::{Deserialize, Serialize};

    #[derive(Serialize, Deserialize, PartialEq, Debug)]
    struct R {
        #[serde(with = "super::inf_f64")]
        x: f64,
    }

    #[test]
    fn infinity_round_trips_as_string() {
        let s = serde_json::to_string(&R { x: f64::INFINITY }).unwrap();
        assert_eq!(s, r#"{"x":"inf"}"#);
        assert_eq!(serde_json::from_str::<R>(&s).unwrap().x, f64::INFINITY);
        assert_eq!(serde_json::from_str::<R>(r#"{"x":0.25}"#).unwrap().x, 0.25);
        assert_eq!(serde_json::from_str::<R>(r#"{"x":3}"#).unwrap().x, 3.0);
        assert!(serde_json::from_str::<R>(r#"{"x":"nan"}"#).is_err());
    }
}
