//! Token normalization shared by comment extraction, defect similarity and
//! free-form query matching.

use std::collections::BTreeSet;

/// Default English stopword list (30 words).
pub const DEFAULT_STOPWORDS: [&str; 30] = [
    "a", "an", "the", "of", "to", "in", "on", "at", "by", "for", "from", "with", "and", "or", "is",
    "are", "was", "were", "be", "been", "it", "its", "this", "that", "which", "what", "how", "as",
    "do", "does",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Normalizer {
    stopwords: BTreeSet<String>,
}

impl Default for Normalizer {
    fn default() -> Self {
        Self::new(DEFAULT_STOPWORDS.iter().copied())
    }
}

impl Normalizer {
    pub fn new<I, S>(stopwords: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self {
            stopwords: stopwords
                .into_iter()
                .map(|s| s.as_ref().to_lowercase())
                .collect(),
        }
    }

    pub fn stopwords(&self) -> impl Iterator<Item = &str> {
        self.stopwords.iter().map(String::as_str)
    }

    pub fn is_stopword(&self, token: &str) -> bool {
        self.stopwords.contains(token)
    }

    /// Lowercased tokens with punctuation stripped and stopwords removed.
    pub fn tokens(&self, text: &str) -> Vec<String> {
        raw_tokens(text)
            .into_iter()
            .filter(|t| !self.is_stopword(t))
            .collect()
    }

    pub fn token_set(&self, text: &str) -> BTreeSet<String> {
        self.tokens(text).into_iter().collect()
    }
}

/// Splits on anything that is not alphanumeric, `_` or `#`, lowercases, and
/// trims stray `#` from the ends. Stopwords are kept.
pub fn raw_tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '_' || c == '#'))
        .map(|t| t.trim_matches('#'))
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Jaccard similarity of two sets; two empty sets score 0.
pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Identifier-shaped words in raw (non-lowercased) text.
pub fn identifier_words(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        let ident_char = c.is_ascii_alphanumeric() || c == '_';
        match (start, ident_char) {
            (None, true) => start = Some(i),
            (Some(s), false) => {
                out.push(&text[s..i]);
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push(&text[s..]);
    }
    out.into_iter()
        .filter(|w| {
            w.chars()
                .next()
                .is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        })
        .collect()
}

/// Splits an identifier into lowercase words on `_` and camelCase humps.
pub fn split_identifier(ident: &str) -> Vec<String> {
    let mut words = Vec::new();
    for part in ident.split(|c: char| c == '_' || c == ':' || !c.is_alphanumeric()) {
        let mut cur = String::new();
        let mut prev_lower = false;
        for c in part.chars() {
            if c.is_uppercase() && prev_lower && !cur.is_empty() {
                words.push(std::mem::take(&mut cur).to_lowercase());
            }
            prev_lower = c.is_lowercase() || c.is_ascii_digit();
            cur.push(c);
        }
        if !cur.is_empty() {
            words.push(cur.to_lowercase());
        }
    }
    words
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bug_reference_survives_normalization() {
        let n = Normalizer::default();
        assert_eq!(n.tokens("// fix for bug#22"), vec!["fix", "bug#22"]);
    }

    #[test]
    fn punctuation_and_case() {
        assert_eq!(
            raw_tokens("Processing error : unsigned 162_S1"),
            vec!["processing", "error", "unsigned", "162_s1"]
        );
        assert!(raw_tokens("--- ## ,,").is_empty());
    }

    #[test]
    fn jaccard_edges() {
        let a: BTreeSet<_> = ["x", "y"].into_iter().collect();
        let b: BTreeSet<_> = ["y", "z"].into_iter().collect();
        assert!((jaccard(&a, &b) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(jaccard::<&str>(&BTreeSet::new(), &BTreeSet::new()), 0.0);
    }

    #[test]
    fn identifier_splitting() {
        assert_eq!(
            split_identifier("mergeSortRange"),
            vec!["merge", "sort", "range"]
        );
        assert_eq!(
            split_identifier("divide_and_conquer"),
            vec!["divide", "and", "conquer"]
        );
        assert_eq!(
            identifier_words("uses var2 and 3x, _tmp"),
            vec!["uses", "var2", "and", "_tmp"]
        );
    }
}
