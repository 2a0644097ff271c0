//! JSON extraction and bounded repair for model output.
//!
//! Models wrap JSON in code fences, chat prose, single quotes, trailing
//! commas, bare enum words, or cut it off mid-object. [`extract_json`] pulls
//! the first balanced object out of raw text; [`repair_json`] applies a
//! fixed, ordered ruleset and reports which rules fired. Text that already
//! parses is returned byte-identical with zero rules applied.

use super::StructuredError;

/// Version tag recorded in output files; bump when the ruleset changes.
pub const REPAIR_RULESET_VERSION: &str = "repair/1";

pub const RULE_SINGLE_QUOTES: &str = "single_quotes";
pub const RULE_TRAILING_COMMA: &str = "trailing_comma";
pub const RULE_BAREWORD: &str = "bareword";
pub const RULE_CLOSE_TRUNCATED: &str = "close_truncated";

/// Locate the first balanced JSON object in `raw` and return it verbatim.
///
/// Balance tracking is string-aware, so braces inside string literals do not
/// count. Fences and surrounding prose are skipped implicitly: scanning
/// starts at each `{` in turn until one closes.
pub fn extract_json(raw: &str) -> Result<String, StructuredError> {
    let bytes = raw.as_bytes();
    let mut start = 0;
    while let Some(offset) = raw[start..].find('{') {
        let open = start + offset;
        if let Some(end) = scan_balanced(bytes, open) {
            return Ok(raw[open..end].to_string());
        }
        start = open + 1;
    }
    Err(StructuredError::NoJsonFound)
}

/// Return the end (exclusive) of the object starting at `open`, or None if
/// it never balances (including mismatched bracket kinds).
fn scan_balanced(bytes: &[u8], open: usize) -> Option<usize> {
    let mut stack: Vec<u8> = Vec::new();
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(open) {
        if in_string {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_string = false;
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => stack.push(b'}'),
            b'[' => stack.push(b']'),
            b'}' | b']' => {
                if stack.pop() != Some(b) {
                    return None;
                }
                if stack.is_empty() {
                    return Some(i + 1);
                }
            }
            _ => {}
        }
    }
    None
}

/// Apply the bounded repair ruleset to `candidate`.
///
/// Returns the repaired text plus the ids of the rules that fired, in
/// application order. Input that already parses comes back byte-identical
/// with an empty rule list. Input that still fails to parse after every
/// rule is an error.
pub fn repair_json(candidate: &str) -> Result<(String, Vec<String>), StructuredError> {
    if serde_json::from_str::<serde_json::Value>(candidate).is_ok() {
        return Ok((candidate.to_string(), Vec::new()));
    }

    let mut rules = Vec::new();
    let normalized = normalize_tokens(candidate, &mut rules);
    let closed = close_truncated(&normalized, &mut rules);

    match serde_json::from_str::<serde_json::Value>(&closed) {
        Ok(_) => Ok((closed, rules)),
        Err(e) => Err(StructuredError::UnrepairableJson(e.to_string())),
    }
}

/// One string-aware pass handling single-quoted strings, bare words, and
/// trailing commas.
fn normalize_tokens(input: &str, rules: &mut Vec<String>) -> String {
    let chars: Vec<char> = input.chars().collect();
    let mut out = String::with_capacity(input.len());
    let mut i = 0;
    let mut fired_single = false;
    let mut fired_comma = false;
    let mut fired_bareword = false;
    // last significant (non-whitespace) char copied out; a bare word is only
    // a token when it starts a key or value, never mid-number (1e5).
    let mut last_sig: Option<char> = None;

    while i < chars.len() {
        let c = chars[i];
        match c {
            '"' => {
                // copy a double-quoted string verbatim
                out.push(c);
                i += 1;
                let mut escaped = false;
                while i < chars.len() {
                    let d = chars[i];
                    out.push(d);
                    i += 1;
                    if escaped {
                        escaped = false;
                    } else if d == '\\' {
                        escaped = true;
                    } else if d == '"' {
                        break;
                    }
                }
                last_sig = Some('"');
            }
            '\'' => {
                // re-quote a single-quoted string as double-quoted
                fired_single = true;
                out.push('"');
                i += 1;
                while i < chars.len() {
                    let d = chars[i];
                    if d == '\\' && i + 1 < chars.len() && chars[i + 1] == '\'' {
                        out.push('\'');
                        i += 2;
                    } else if d == '\\' {
                        out.push('\\');
                        if i + 1 < chars.len() {
                            out.push(chars[i + 1]);
                            i += 2;
                        } else {
                            i += 1;
                        }
                    } else if d == '\'' {
                        i += 1;
                        break;
                    } else if d == '"' {
                        out.push('\\');
                        out.push('"');
                        i += 1;
                    } else {
                        out.push(d);
                        i += 1;
                    }
                }
                out.push('"');
                last_sig = Some('"');
            }
            ',' => {
                // drop the comma when the next significant char closes a container
                let mut j = i + 1;
                while j < chars.len() && chars[j].is_whitespace() {
                    j += 1;
                }
                if j < chars.len() && (chars[j] == '}' || chars[j] == ']') {
                    fired_comma = true;
                    i += 1;
                } else {
                    out.push(c);
                    last_sig = Some(c);
                    i += 1;
                }
            }
            _ if (c.is_alphabetic() || c == '_')
                && matches!(last_sig, None | Some('{') | Some('[') | Some(',') | Some(':')) =>
            {
                let start = i;
                while i < chars.len()
                    && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '-')
                {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect();
                if word == "true" || word == "false" || word == "null" {
                    out.push_str(&word);
                } else {
                    fired_bareword = true;
                    out.push('"');
                    out.push_str(&word);
                    out.push('"');
                }
                last_sig = Some('"');
            }
            _ => {
                out.push(c);
                if !c.is_whitespace() {
                    last_sig = Some(c);
                }
                i += 1;
            }
        }
    }

    if fired_single {
        rules.push(RULE_SINGLE_QUOTES.to_string());
    }
    if fired_comma {
        rules.push(RULE_TRAILING_COMMA.to_string());
    }
    if fired_bareword {
        rules.push(RULE_BAREWORD.to_string());
    }
    out
}

/// Close an object cut off mid-stream: terminate an open string literal,
/// drop a dangling comma, then append the missing closers.
fn close_truncated(input: &str, rules: &mut Vec<String>) -> String {
    let mut stack: Vec<char> = Vec::new();
    let mut in_string = false;
    let mut escaped = false;
    for c in input.chars() {
        if in_string {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_string = false;
            }
            continue;
        }
        match c {
            '"' => in_string = true,
            '{' => stack.push('}'),
            '[' => stack.push(']'),
            '}' | ']'
                if stack.last() == Some(&c) => {
                    stack.pop();
                }
            _ => {}
        }
    }

    if !in_string && stack.is_empty() {
        return input.to_string();
    }

    let mut out = input.to_string();
    if in_string {
        out.push('"');
    }
    let trimmed = out.trim_end();
    if let Some(stripped) = trimmed.strip_suffix(',') {
        out = stripped.to_string();
        if !rules.iter().any(|r| r == RULE_TRAILING_COMMA) {
            rules.push(RULE_TRAILING_COMMA.to_string());
        }
    }
    while let Some(closer) = stack.pop() {
        out.push(closer);
    }
    rules.push(RULE_CLOSE_TRUNCATED.to_string());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extracts_fenced_object() {
        let raw = "Here is the result:\n```json\n{\"a\":1}\n```";
        assert_eq!(extract_json(raw).unwrap(), "{\"a\":1}");
    }

    #[test]
    fn extracts_with_trailing_chatter() {
        let raw = "{\"a\":{\"b\":2}} trailing";
        assert_eq!(extract_json(raw).unwrap(), "{\"a\":{\"b\":2}}");
    }

    #[test]
    fn no_json_is_an_error() {
        assert!(matches!(
            extract_json("no json here"),
            Err(StructuredError::NoJsonFound)
        ));
    }

    #[test]
    fn braces_inside_strings_do_not_count() {
        let raw = "x {\"a\": \"}{\"} y";
        assert_eq!(extract_json(raw).unwrap(), "{\"a\": \"}{\"}");
    }

    #[test]
    fn repair_single_quotes_and_trailing_comma() {
        let (fixed, rules) = repair_json("{'a': 1,}").unwrap();
        assert_eq!(fixed, "{\"a\": 1}");
        assert_eq!(rules, vec![RULE_SINGLE_QUOTES, RULE_TRAILING_COMMA]);
    }

    #[test]
    fn repair_is_identity_on_valid_input() {
        let input = "{\"a\": [1, 2], \"b\": {\"c\": true}}";
        let (fixed, rules) = repair_json(input).unwrap();
        assert_eq!(fixed, input);
        assert!(rules.is_empty());
    }

    #[test]
    fn repair_quotes_barewords() {
        let (fixed, rules) = repair_json("{\"grade\": E4}").unwrap();
        assert_eq!(fixed, "{\"grade\": \"E4\"}");
        assert_eq!(rules, vec![RULE_BAREWORD]);
    }

    #[test]
    fn repair_closes_truncated_object() {
        let (fixed, rules) = repair_json("{\"a\": {\"b\": 2").unwrap();
        assert_eq!(fixed, "{\"a\": {\"b\": 2}}");
        assert_eq!(rules, vec![RULE_CLOSE_TRUNCATED]);
    }

    #[test]
    fn key_with_no_value_is_unrepairable() {
        assert!(matches!(
            repair_json("{\"a\": "),
            Err(StructuredError::UnrepairableJson(_))
        ));
    }

    #[test]
    fn repair_is_idempotent() {
        for broken in [
            "{'a': 1,}",
            "{\"grade\": E4}",
            "{\"a\": {\"b\": 2",
            "{\"a\": \"it's fine\", }",
        ] {
            let (once, _) = repair_json(broken).unwrap();
            let (twice, rules) = repair_json(&once).unwrap();
            assert_eq!(once, twice);
            assert!(rules.is_empty());
        }
    }

    #[test]
    fn apostrophe_inside_double_quotes_survives() {
        let input = "{\"note\": \"patient's chart\"}";
        let (fixed, rules) = repair_json(input).unwrap();
        assert_eq!(fixed, input);
        assert!(rules.is_empty());
    }
}
