use std::collections::BTreeSet;

use serde::Serialize;

use crate::text::identifier_words;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Fresh,
    Stale,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StalenessVerdict {
    pub comment: String,
    pub entity: String,
    /// Identifier-like comment tokens absent from the scope, in first-seen order.
    pub missing: Vec<String>,
    pub verdict: Verdict,
}

impl StalenessVerdict {
    pub fn is_stale(&self) -> bool {
        self.verdict == Verdict::Stale
    }
}

fn identifier_like(word: &str, declared: &BTreeSet<String>) -> bool {
    let mixed_case = word.chars().skip(1).any(|c| c.is_ascii_uppercase())
        && word.chars().any(|c| c.is_ascii_lowercase());
    word.contains('_') || mixed_case || declared.contains(word)
}

/// Checks a comment's identifier-like words (containing `_`, mixed case, or
/// a declared name) against the identifiers of its entity's scope.
pub fn validate_comment(
    comment_id: &str,
    comment_text: &str,
    entity_id: &str,
    scope: &BTreeSet<String>,
    declared: &BTreeSet<String>,
) -> StalenessVerdict {
    let mut missing: Vec<String> = Vec::new();
    for w in identifier_words(comment_text) {
        if identifier_like(w, declared) && !scope.contains(w) && !missing.iter().any(|m| m == w) {
            missing.push(w.to_string());
        }
    }
    let verdict = if missing.is_empty() {
        Verdict::Fresh
    } else {
        Verdict::Stale
    };
    StalenessVerdict {
        comment: comment_id.to_string(),
        entity: entity_id.to_string(),
        missing,
        verdict,
    }
}
