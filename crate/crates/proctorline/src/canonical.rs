//! Byte-stable JSON documents: keys sorted, two-space indent, trailing LF.

use serde::Serialize;

pub fn to_canonical_json<T: Serialize>(value: &T) -> serde_json::Result<String> {
    // Going through `Value` sorts object keys (its map is a BTreeMap).
    let v = serde_json::to_value(value)?;
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

/// Single-line variant for records on standard error.
pub fn to_canonical_line<T: Serialize>(value: &T) -> serde_json::Result<String> {
    serde_json::to_string(&serde_json::to_value(value)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct S {
        zeta: u32,
        alpha: &'static str,
    }

    #[test]
    fn keys_are_sorted_and_lf_terminated() {
        let s = to_canonical_json(&S { zeta: 1, alpha: "a" }).unwrap();
        assert_eq!(s, "{\n  \"alpha\": \"a\",\n  \"zeta\": 1\n}\n");
        assert_eq!(to_canonical_line(&S { zeta: 1, alpha: "a" }).unwrap(), "{\"alpha\":\"a\",\"zeta\":1}");
    }
}
