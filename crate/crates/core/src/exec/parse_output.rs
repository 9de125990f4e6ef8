//! Parsing model answers into typed values.
//!
//! Rules: yes/no answers match by case-insensitive prefix; numbers may carry
//! thousands separators; `NULL` means a missing value; structured answers
//! must be well-formed JSON or the call is retried.

use serde_json::Value as Json;

use crate::text::{extract_json, strip_code_fence};
use crate::value::{TypeTag, Value};

/// Strips fences, quotes, emphasis and a leading `Answer:` label.
fn clean(text: &str) -> &str {
    let mut t = strip_code_fence(text).trim();
    if t.len() >= 7 && t[..7].eq_ignore_ascii_case("answer:") {
        t = t[7..].trim_start();
    }
    t.trim_matches(|c: char| c == '"' || c == '\'' || c == '*' || c == '`').trim()
}

pub fn parse_bool(text: &str) -> Result<bool, String> {
    let t = clean(text).to_ascii_lowercase();
    if t.starts_with("yes") || t.starts_with("true") {
        Ok(true)
    } else if t.starts_with("no") || t.starts_with("false") {
        Ok(false)
    } else {
        Err(format!("expected yes or no, got `{}`", first_line(text)))
    }
}

fn first_line(text: &str) -> &str {
    let t = text.trim();
    let line = t.lines().next().unwrap_or("");
    if line.len() > 80 {
        let mut end = 80;
        while !line.is_char_boundary(end) {
            end -= 1;
        }
        &line[..end]
    } else {
        line
    }
}

fn is_null(t: &str) -> bool {
    t.eq_ignore_ascii_case("null")
}

/// Removes thousands separators between digits.
fn strip_separators(t: &str) -> String {
    let chars: Vec<char> = t.chars().collect();
    let mut out = String::with_capacity(t.len());
    for (i, c) in chars.iter().enumerate() {
        let between_digits = i > 0
            && i + 1 < chars.len()
            && chars[i - 1].is_ascii_digit()
            && chars[i + 1].is_ascii_digit();
        if (*c == ',' || *c == '_') && between_digits {
            continue;
        }
        out.push(*c);
    }
    out
}

pub fn parse_value(text: &str, ty: TypeTag) -> Result<Value, String> {
    let t = clean(text);
    if is_null(t) {
        return Ok(Value::Null);
    }
    match ty {
        TypeTag::Bool => parse_bool(t).map(Value::Bool),
        TypeTag::Int => {
            let s = strip_separators(t);
            if let Ok(i) = s.parse::<i64>() {
                return Ok(Value::Int(i));
            }
            match s.parse::<f64>() {
                Ok(x) if x.fract() == 0.0 && x.abs() < 9.0e15 => Ok(Value::Int(x as i64)),
                _ => Err(format!("expected an integer, got `{}`", first_line(text))),
            }
        }
        TypeTag::Float => strip_separators(t)
            .parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .map(Value::Float)
            .ok_or_else(|| format!("expected a number, got `{}`", first_line(text))),
        TypeTag::Text => Ok(Value::Text(t.to_string())),
    }
}

fn json_value(v: &Json, ty: TypeTag) -> Result<Value, String> {
    match v {
        Json::Null => Ok(Value::Null),
        Json::String(s) => parse_value(s, ty),
        Json::Bool(b) if ty == TypeTag::Bool => Ok(Value::Bool(*b)),
        Json::Number(n) => match ty {
            TypeTag::Int => n.as_i64().map(Value::Int).ok_or_else(|| format!("expected an integer, got {n}")),
            TypeTag::Float => n.as_f64().map(Value::Float).ok_or_else(|| format!("expected a number, got {n}")),
            TypeTag::Text => Ok(Value::Text(n.to_string())),
            TypeTag::Bool => Err(format!("expected true or false, got {n}")),
        },
        other if ty == TypeTag::Text => Ok(Value::Text(other.to_string())),
        other => Err(format!("expected {ty}, got {other}")),
    }
}

/// A JSON object with one key per field.
pub fn parse_tuple(text: &str, fields: &[(String, TypeTag)]) -> Result<Vec<Value>, String> {
    let json = extract_json(text).ok_or("expected a JSON object")?;
    let obj: serde_json::Map<String, Json> = serde_json::from_str(json).map_err(|e| format!("invalid JSON object: {e}"))?;
    fields
        .iter()
        .map(|(name, ty)| match obj.get(name) {
            Some(v) => json_value(v, *ty).map_err(|e| format!("field `{name}`: {e}")),
            None => Err(format!("field `{name}` is missing")),
        })
        .collect()
}

/// 1-based `[i, j]` pairs within `n1 x n2`, returned 0-based, sorted and
/// without duplicates.
pub fn parse_pairs(text: &str, n1: usize, n2: usize) -> Result<Vec<(usize, usize)>, String> {
    let t = strip_code_fence(text);
    let json = match (t.find('['), t.rfind(']')) {
        (Some(s), Some(e)) if e > s => &t[s..=e],
        _ => return Err("expected a JSON list of pairs".into()),
    };
    let raw: Vec<Vec<Json>> = serde_json::from_str(json).map_err(|e| format!("invalid pair list: {e}"))?;
    let mut out = Vec::with_capacity(raw.len());
    for p in raw {
        let nums: Vec<u64> = p.iter().filter_map(Json::as_u64).collect();
        match nums.as_slice() {
            [i, j] if p.len() == 2 && *i >= 1 && *j >= 1 && (*i as usize) <= n1 && (*j as usize) <= n2 => {
                out.push((*i as usize - 1, *j as usize - 1))
            }
            _ => return Err(format!("pair {} is not two numbers within 1..{n1} and 1..{n2}", Json::Array(p))),
        }
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// `A` or `B`, case-insensitive prefix; true means A.
pub fn parse_choice(text: &str) -> Result<bool, String> {
    let t = clean(text);
    let t = t.strip_prefix("Item ").or_else(|| t.strip_prefix("item ")).unwrap_or(t);
    match t.chars().next().map(|c| c.to_ascii_uppercase()) {
        Some('A') if t.len() == 1 || !t.as_bytes()[1].is_ascii_alphabetic() => Ok(true),
        Some('B') if t.len() == 1 || !t.as_bytes()[1].is_ascii_alphabetic() => Ok(false),
        _ => Err(format!("expected A or B, got `{}`", first_line(text))),
    }
}

/// Batch sizes from the sizing call.
pub fn parse_batch_sizes(text: &str) -> Result<(usize, usize), String> {
    let json = extract_json(text).ok_or("expected a JSON object with b1 and b2")?;
    let v: Json = serde_json::from_str(json).map_err(|e| format!("invalid JSON: {e}"))?;
    let get = |k: &str| -> Result<usize, String> {
        match v.get(k) {
            Some(Json::Number(n)) => n
                .as_u64()
                .filter(|x| *x >= 1)
                .map(|x| x as usize)
                .ok_or_else(|| format!("`{k}` must be a positive integer")),
            Some(Json::String(s)) => s.trim().parse::<usize>().ok().filter(|x| *x >= 1).ok_or_else(|| format!("`{k}` must be a positive integer")),
            _ => Err(format!("`{k}` is missing")),
        }
    };
    Ok((get("b1")?, get("b2")?))
}
