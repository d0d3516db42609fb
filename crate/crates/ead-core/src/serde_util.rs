//! Serde helpers for fields with non-default encodings.

/// Threshold field codec: finite values serialize as plain numbers,
/// +infinity as the string `"inf"` (JSON has no infinity literal).
/// Accepts numbers, `inf` / `+inf` / `infinity` strings, and integer
/// literals on input.
pub mod float_or_inf {
    use serde::de::{self, Visitor};
    use serde::{Deserializer, Serializer};
    use std::fmt;

    pub fn serialize<S: Serializer>(value: &f64, ser: S) -> Result<S::Ok, S::Error> {
        if value.is_infinite() && *value > 0.0 {
            ser.serialize_str("inf")
        } else {
            ser.serialize_f64(*value)
        }
    }

    struct FloatOrInf;

    impl Visitor<'_> for FloatOrInf {
        type Value = f64;

        fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
            write!(f, "a number or the string \"inf\"")
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
            parse_inf(v).ok_or_else(|| de::Error::custom(format!("cannot parse threshold {v:?}")))
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<f64, D::Error> {
        de.deserialize_any(FloatOrInf)
    }

    /// Shared by config-file and CLI-flag parsing.
    pub fn parse_inf(text: &str) -> Option<f64> {
        match text.trim().to_ascii_lowercase().as_str() {
            "inf" | "+inf" | "infinity" => Some(f64::INFINITY),
            other => other.parse::<f64>().ok().filter(|v| !v.is_nan()),
        }
    }
}

/// 64-bit fingerprint codec: zero-padded lowercase hex string on the
/// wire, as in `"00000000075bcd15"`.
pub mod hex_u64 {
    use serde::de::{self, Visitor};
    use serde::{Deserializer, Serializer};
    use std::fmt;

    pub fn serialize<S: Serializer>(value: &u64, ser: S) -> Result<S::Ok, S::Error> {
        ser.serialize_str(&format!("{value:016x}"))
    }

    struct HexU64;

    impl Visitor<'_> for HexU64 {
        type Value = u64;

        fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
            write!(f, "a hex-encoded 64-bit fingerprint")
        }

        fn visit_str<E: de::Error>(self, v: &str) -> Result<u64, E> {
            u64::from_str_radix(v, 16)
                .map_err(|e| de::Error::custom(format!("bad fingerprint {v:?}: {e}")))
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<u64, D::Error> {
        de.deserialize_str(HexU64)
    }
}
