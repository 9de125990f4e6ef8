//! Helpers for pulling structured content out of model responses.

/// Removes a surrounding Markdown code fence, if any.
pub fn strip_code_fence(text: &str) -> &str {
    let t = text.trim();
    let Some(rest) = t.strip_prefix("```") else {
        return t;
    };
    let rest = match rest.find('\n') {
        Some(i) => &rest[i + 1..],
        None => rest,
    };
    rest.trim_end().strip_suffix("```").unwrap_or(rest).trim()
}

/// The outermost JSON object or array in `text`, from the first opening
/// bracket to the last matching closing bracket.
pub fn extract_json(text: &str) -> Option<&str> {
    let t = strip_code_fence(text);
    let start = t.find(['{', '['])?;
    let close = if t.as_bytes()[start] == b'{' { '}' } else { ']' };
    let end = t.rfind(close)?;
    (end > start).then(|| &t[start..=end])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fences_and_chatter_are_removed() {
        assert_eq!(strip_code_fence("```hra\nSelect(true, t)\n```"), "Select(true, t)");
        assert_eq!(strip_code_fence("  plain "), "plain");
        assert_eq!(extract_json("Sure! {\"a\": [1]} hope that helps"), Some("{\"a\": [1]}"));
        assert_eq!(extract_json("pairs: [[1,2]]"), Some("[[1,2]]"));
        assert_eq!(extract_json("nothing"), None);
    }
}
