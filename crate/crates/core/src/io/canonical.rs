//! Deterministic JSON text: sorted keys, two-space indentation, floats with
//! 17 significant digits, scalar arrays on one line.

use std::fmt::Write;

use serde_json::{Number, Value};

use crate::error::{Error, Result};

fn number(n: &Number, out: &mut String) -> Result<()> {
    if n.is_f64() {
        let v = n.as_f64().expect("f64 number");
        if !v.is_finite() {
            return Err(Error::Input("non-finite number cannot be written".into()));
        }
        write!(out, "{v:.16e}").expect("writing to a String");
    } else {
        write!(out, "{n}").expect("writing to a String");
    }
    Ok(())
}

fn is_scalar(v: &Value) -> bool {
    !matches!(v, Value::Array(_) | Value::Object(_))
}

fn write_value(v: &Value, indent: usize, out: &mut String) -> Result<()> {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => number(n, out)?,
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("string escapes")),
        Value::Array(items) if items.iter().all(is_scalar) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_value(item, indent, out)?;
            }
            out.push(']');
        }
        Value::Array(items) => {
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                pad(out, indent + 1);
                write_value(item, indent + 1, out)?;
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            pad(out, indent);
            out.push(']');
        }
        Value::Object(map) if map.is_empty() => out.push_str("{}"),
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (i, k) in keys.iter().enumerate() {
                pad(out, indent + 1);
                out.push_str(&serde_json::to_string(k).expect("string escapes"));
                out.push_str(": ");
                write_value(&map[k.as_str()], indent + 1, out)?;
                out.push_str(if i + 1 < keys.len() { ",\n" } else { "\n" });
            }
            pad(out, indent);
            out.push('}');
        }
    }
    Ok(())
}

fn pad(out: &mut String, indent: usize) {
    for _ in 0..indent {
        out.push_str("  ");
    }
}

/// Canonical text of `v`, newline-terminated.
pub fn to_canonical_string(v: &Value) -> Result<String> {
    let mut out = String::new();
    write_value(v, 0, &mut out)?;
    out.push('\n');
    Ok(out)
}
