//! Canonical JSON encoding and SHA-256 helpers.
//!
//! Canonical form: UTF-8, object keys sorted by byte order, no
//! insignificant whitespace, numbers in shortest round-trip decimal form.
//! Both evidence hashes and the audit chain are computed over this form.

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

/// Encodes any serializable value canonically.
///
/// Panics only if `value` cannot be represented as JSON (non-string map
/// keys, non-finite floats), which no type in this crate produces.
pub fn to_canonical_string<T: Serialize + ?Sized>(value: &T) -> String {
    let value = serde_json::to_value(value).expect("value is representable as JSON");
    canonical_value(&value)
}

pub fn canonical_value(value: &Value) -> String {
    let mut out = String::new();
    write_value(&mut out, value);
    out
}

fn write_value(out: &mut String, value: &Value) {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        // serde_json prints integers exactly and floats via ryu (shortest round-trip).
        Value::Number(n) => out.push_str(&n.to_string()),
        Value::String(s) => write_string(out, s),
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_value(out, item);
            }
            out.push(']');
        }
        Value::Object(map) => {
            let mut entries: Vec<(&String, &Value)> = map.iter().collect();
            entries.sort_by(|a, b| a.0.as_bytes().cmp(b.0.as_bytes()));
            out.push('{');
            for (i, (key, item)) in entries.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_string(out, key);
                out.push(':');
                write_value(out, item);
            }
            out.push('}');
        }
    }
}

fn write_string(out: &mut String, s: &str) {
    out.push_str(&serde_json::to_string(s).expect("strings always serialize"));
}

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: impl AsRef<[u8]>) -> String {
    hex::encode(Sha256::digest(bytes.as_ref()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn keys_are_sorted_and_compact() {
        let v = json!({"b": 1, "a": {"z": [1, 2], "c": "x"}, "A": true});
        assert_eq!(
            canonical_value(&v),
            r#"{"A":true,"a":{"c":"x","z":[1,2]},"b":1}"#
        );
    }

    #[test]
    fn floats_use_shortest_round_trip() {
        let v = json!([0.75, 0.95, 1.0, 0.1, 1e-7]);
        assert_eq!(canonical_value(&v), "[0.75,0.95,1.0,0.1,1e-7]");
    }

    #[test]
    fn strings_are_escaped() {
        let v = json!({"k": "a\"b\n"});
        assert_eq!(canonical_value(&v), r#"{"k":"a\"b\n"}"#);
    }

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
