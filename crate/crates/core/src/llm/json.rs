//! Tolerant extraction of the first JSON object from model output.

use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum JsonError {
    #[error("no JSON object found")]
    NoJsonFound,
    #[error("unbalanced braces")]
    UnbalancedBraces,
    #[error("malformed JSON object: {0}")]
    Malformed(String),
}

/// Returns the text of the first balanced `{...}` block, honouring both
/// quote styles so braces inside strings do not count.
fn balanced_object(text: &str) -> Result<&str, JsonError> {
    let start = text.find('{').ok_or(JsonError::NoJsonFound)?;
    let bytes = text.as_bytes();
    let mut depth = 0usize;
    let mut quote: Option<u8> = None;
    let mut escaped = false;
    for (off, &b) in bytes[start..].iter().enumerate() {
        if let Some(q) = quote {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == q {
                quote = None;
            }
            continue;
        }
        match b {
            b'"' => quote = Some(b'"'),
            // Apostrophes only open a string where a JSON token could start.
            b'\'' if starts_token(&bytes[start..start + off]) => quote = Some(b'\''),
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Ok(&text[start..start + off + 1]);
                }
            }
            _ => {}
        }
    }
    Err(JsonError::UnbalancedBraces)
}

fn starts_token(before: &[u8]) -> bool {
    match before.iter().rev().find(|b| !b.is_ascii_whitespace()) {
        None => true,
        Some(b) => matches!(b, b'{' | b'[' | b',' | b':'),
    }
}

/// Rewrites single-quoted strings as double-quoted ones.
fn repair_single_quotes(s: &str) -> String {
    let bytes = s.as_bytes();
    let mut out = String::with_capacity(s.len());
    let mut quote: Option<char> = None;
    let chars: Vec<(usize, char)> = s.char_indices().collect();
    let mut idx = 0;
    while idx < chars.len() {
        let (pos, c) = chars[idx];
        match quote {
            None => {
                if c == '"' {
                    quote = Some('"');
                    out.push(c);
                } else if c == '\'' && starts_token(&bytes[..pos]) {
                    quote = Some('\'');
                    out.push('"');
                } else {
                    out.push(c);
                }
            }
            Some('"') => {
                out.push(c);
                if c == '\\' {
                    if let Some(&(_, n)) = chars.get(idx + 1) {
                        out.push(n);
                        idx += 1;
                    }
                } else if c == '"' {
                    quote = None;
                }
            }
            Some(_) => {
                if c == '\\' {
                    match chars.get(idx + 1) {
                        Some(&(_, '\'')) => {
                            out.push('\'');
                            idx += 1;
                        }
                        Some(&(_, n)) => {
                            out.push('\\');
                            out.push(n);
                            idx += 1;
                        }
                        None => out.push('\\'),
                    }
                } else if c == '"' {
                    out.push_str("\\\"");
                } else if c == '\'' {
                    quote = None;
                    out.push('"');
                } else {
                    out.push(c);
                }
            }
        }
        idx += 1;
    }
    out
}

/// Parses the first JSON object in `raw`, ignoring code fences and
/// surrounding prose. Single quotes are repaired only if the strict parse
/// fails.
pub fn extract_json(raw: &str) -> Result<Map<String, Value>, JsonError> {
    let cleaned = raw.replace("```json", "").replace("```JSON", "").replace("```", "");
    let candidate = balanced_object(&cleaned)?;
    let strict = serde_json::from_str::<Value>(candidate);
    let value = match strict {
        Ok(v) => v,
        Err(first) => {
            let repaired = repair_single_quotes(candidate);
            serde_json::from_str::<Value>(&repaired).map_err(|_| JsonError::Malformed(first.to_string()))?
        }
    };
    match value {
        Value::Object(map) => Ok(map),
        _ => Err(JsonError::NoJsonFound),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn strips_fences() {
        let m = extract_json("```json\n{\"decision\":\"No_op\"}\n```").unwrap();
        assert_eq!(m["decision"], "No_op");
    }

    #[test]
    fn strips_prose() {
        let m = extract_json("Sure! {\"reasoning\":\"x\",\"decision\":\"Set_Recipe\"} hope that helps").unwrap();
        assert_eq!(m["decision"], "Set_Recipe");
    }

    #[test]
    fn repairs_single_quotes() {
        let m = extract_json("{'decision': 'No_op'}").unwrap();
        assert_eq!(m["decision"], "No_op");
        let m = extract_json("{'reply': 'say \"hi\" it\\'s me', 'n': ['a', 'b']}").unwrap();
        assert_eq!(m["reply"], "say \"hi\" it's me");
        assert_eq!(m["n"], json!(["a", "b"]));
    }

    #[test]
    fn apostrophes_in_valid_json_are_untouched() {
        let m = extract_json("{\"reply\": \"Let's go { now\"}").unwrap();
        assert_eq!(m["reply"], "Let's go { now");
    }

    #[test]
    fn error_classes() {
        assert_eq!(extract_json("no json here"), Err(JsonError::NoJsonFound));
        assert_eq!(extract_json("{\"a\": {\"b\": 1}"), Err(JsonError::UnbalancedBraces));
        assert!(matches!(extract_json("{\"a\" 1}"), Err(JsonError::Malformed(_))));
    }

    #[test]
    fn first_object_wins() {
        let m = extract_json("{\"a\":1} {\"b\":2}").unwrap();
        assert!(m.contains_key("a") && !m.contains_key("b"));
    }
}
