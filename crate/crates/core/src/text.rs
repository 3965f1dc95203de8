//! Tokenization and normalization shared by the lexical index and the
//! description matcher.

/// Lowercase, replace every non-alphanumeric character with a space, split on
/// whitespace. No stemming, no stop words.
pub fn lexical_tokens(text: &str) -> Vec<String> {
    let cleaned: String = text
        .chars()
        .map(|c| {
            if c.is_alphanumeric() {
                c.to_lowercase().next().unwrap_or(c)
            } else {
                ' '
            }
        })
        .collect();
    cleaned.split_whitespace().map(str::to_owned).collect()
}

/// Plain whitespace token count, the default length measure for notes.
pub fn whitespace_token_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Normal form used for exact description matching: casefold, collapse
/// internal whitespace, strip trailing punctuation.
pub fn normalize_description(text: &str) -> String {
    let folded = text.to_lowercase();
    let collapsed = folded.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed
        .trim_end_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace())
        .to_owned()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens_strip_punctuation() {
        assert_eq!(lexical_tokens("Chest-pain, SOB!"), vec!["chest", "pain", "sob"]);
        assert!(lexical_tokens("  ... ").is_empty());
    }

    #[test]
    fn normalization() {
        assert_eq!(
            normalize_description("  Essential  (primary)\thypertension. "),
            "essential (primary) hypertension"
        );
        assert_eq!(normalize_description("Hypotension"), normalize_description("hypotension!"));
    }
}
