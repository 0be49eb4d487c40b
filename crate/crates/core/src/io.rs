//! Number formatting shared by the CSV and JSON writers.

use serde::Serializer;
use serde_json::value::RawValue;

use crate::error::{config_err, Result};

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|e| config_err(format!("bad number {s:?}: {e}")))
}

/// Serialize a finite float as a 17-significant-digit JSON number.
pub fn ser_f64_17<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::Error;
    use serde::Serialize;
    if !x.is_finite() {
        return Err(S::Error::custom(format!("non-finite value {x}")));
    }
    let raw = RawValue::from_string(fmt_f64(*x)).map_err(S::Error::custom)?;
    raw.serialize(s)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02e23, 0.0] {
            let s = fmt_f64(x);
            assert_eq!(parse_f64(&s).unwrap(), x);
        }
        assert_eq!(fmt_f64(0.2), "2.0000000000000001e-1");
    }
}
