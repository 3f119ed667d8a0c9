//! Identifier-aware tokenization shared by lexical search, rule triggering,
//! member-name similarity and the guardrail's token F1.

/// Lowercased tokens; splits on non-alphanumerics and camel-case humps.
///
/// `route_length`, `routeLength` and "Route length" all yield `["route", "length"]`.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for run in text.split(|c: char| !c.is_alphanumeric()) {
        if run.is_empty() {
            continue;
        }
        let chars: Vec<char> = run.chars().collect();
        let mut start = 0;
        for i in 1..chars.len() {
            let (prev, cur) = (chars[i - 1], chars[i]);
            let next_lower = chars.get(i + 1).is_some_and(|c| c.is_lowercase());
            let hump = (prev.is_lowercase() || prev.is_ascii_digit()) && cur.is_uppercase()
                || prev.is_uppercase() && cur.is_uppercase() && next_lower;
            if hump {
                out.push(chars[start..i].iter().collect::<String>().to_lowercase());
                start = i;
            }
        }
        out.push(chars[start..].iter().collect::<String>().to_lowercase());
    }
    out
}

pub fn identifier_tokens(ident: &str) -> Vec<String> {
    tokenize(ident)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_identifiers() {
        assert_eq!(tokenize("route_length"), ["route", "length"]);
        assert_eq!(tokenize("routeLength"), ["route", "length"]);
        assert_eq!(tokenize("HTTPServer v2"), ["http", "server", "v2"]);
        assert_eq!(tokenize("Net.route_length: Route length"), ["net", "route", "length", "route", "length"]);
        assert!(tokenize("  -- ").is_empty());
    }
}
