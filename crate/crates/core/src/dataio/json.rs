//! Canonical JSON: keys sorted, two-space indentation, floats with 17
//! significant digits in exponent form, integers as integers, trailing
//! newline.

use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use super::fnv1a;
use crate::error::Result;

fn write_float(out: &mut String, f: f64) {
    if f.is_finite() {
        out.push_str(&format!("{f:.16e}"));
    } else {
        out.push_str("null");
    }
}

fn write_value(out: &mut String, v: &Value, indent: usize) {
    let pad = |out: &mut String, n: usize| out.extend(std::iter::repeat_n(' ', n));
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => match (n.as_u64(), n.as_i64()) {
            (Some(u), _) if !n.is_f64() => out.push_str(&u.to_string()),
            (_, Some(i)) if !n.is_f64() => out.push_str(&i.to_string()),
            _ => write_float(out, n.as_f64().unwrap_or(f64::NAN)),
        },
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                pad(out, indent + 2);
                write_value(out, item, indent + 2);
                if i + 1 < items.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            pad(out, indent);
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (i, key) in keys.iter().enumerate() {
                pad(out, indent + 2);
                out.push_str(&Value::String((*key).clone()).to_string());
                out.push_str(": ");
                write_value(out, &map[*key], indent + 2);
                if i + 1 < keys.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            pad(out, indent);
            out.push('}');
        }
    }
}

pub fn canonical_json(v: &Value) -> String {
    let mut out = String::new();
    write_value(&mut out, v, 0);
    out.push('\n');
    out
}

pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(canonical_json(&serde_json::to_value(value)?))
}

/// Writes canonical JSON and returns the FNV-1a checksum of the bytes.
pub fn write_canonical_json<T: Serialize>(path: &Path, value: &T) -> Result<u64> {
    let text = to_canonical_json(value)?;
    fs::write(path, text.as_bytes())?;
    Ok(fnv1a(text.as_bytes()))
}
