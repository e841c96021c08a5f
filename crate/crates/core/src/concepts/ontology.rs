use std::collections::{BTreeMap, BTreeSet};

use serde::Deserialize;

use super::strategy::default_keywords;
use crate::error::{Error, Result};
use crate::extraction::Comment;
use crate::graph::{Object, Predicate, Provenance, Source, Triple};
use crate::ids;
use crate::text::Normalizer;

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OntologyEntry {
    pub term: String,
    #[serde(default)]
    pub synonyms: Vec<String>,
    #[serde(default)]
    pub concept: Option<String>,
}

impl OntologyEntry {
    /// The concept id suffix: the explicit concept, else the term.
    pub fn concept(&self) -> &str {
        self.concept.as_deref().unwrap_or(&self.term)
    }
}

/// Terms and synonyms mapped to concepts, pre-tokenized for phrase matching.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ontology {
    entries: Vec<OntologyEntry>,
    /// (phrase tokens, concept), in file order.
    phrases: Vec<(Vec<String>, String)>,
}

impl Default for Ontology {
    fn default() -> Self {
        Self::new(Vec::new(), &Normalizer::default())
    }
}

impl Ontology {
    pub fn new(entries: Vec<OntologyEntry>, normalizer: &Normalizer) -> Self {
        let mut phrases = Vec::new();
        for e in &entries {
            for text in std::iter::once(&e.term).chain(&e.synonyms) {
                let toks = normalizer.tokens(text);
                if !toks.is_empty() {
                    phrases.push((toks, e.concept().to_string()));
                }
            }
        }
        Ontology { entries, phrases }
    }

    pub fn entries(&self) -> &[OntologyEntry] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Concepts with at least one phrase occurring contiguously in `tokens`.
    pub fn concepts_in(&self, tokens: &[String]) -> BTreeSet<String> {
        self.phrases
            .iter()
            .filter(|(p, _)| phrase_hits(tokens, std::slice::from_ref(p)) > 0)
            .map(|(_, c)| c.clone())
            .collect()
    }

    /// Keyword phrases of a strategy class: the phrases of entries whose
    /// concept is the class, falling back to built-in keywords.
    pub fn keywords_for(&self, class: &str) -> Vec<Vec<String>> {
        let own: Vec<Vec<String>> = self
            .phrases
            .iter()
            .filter(|(_, c)| c == class)
            .map(|(p, _)| p.clone())
            .collect();
        if own.is_empty() {
            default_keywords(class)
                .iter()
                .map(|k| vec![k.to_string()])
                .collect()
        } else {
            own
        }
    }

    /// Concept entities: label is the term, synonyms kept as a JSON attr.
    pub fn concept_entities(&self) -> BTreeMap<String, (String, Vec<String>)> {
        let mut out: BTreeMap<String, (String, Vec<String>)> = BTreeMap::new();
        for e in &self.entries {
            let slot = out
                .entry(ids::concept(e.concept()))
                .or_insert_with(|| (e.term.clone(), Vec::new()));
            for s in std::iter::once(&e.term).chain(&e.synonyms) {
                if !slot.1.contains(s) {
                    slot.1.push(s.clone());
                }
            }
        }
        out
    }
}

/// Number of (possibly overlapping) occurrences of any phrase in `tokens`.
pub(crate) fn phrase_hits(tokens: &[String], phrases: &[Vec<String>]) -> usize {
    phrases
        .iter()
        .filter(|p| !p.is_empty())
        .map(|p| {
            tokens
                .windows(p.len())
                .filter(|w| *w == p.as_slice())
                .count()
        })
        .sum()
}

/// Loads a line-delimited `{"term","synonyms","concept"}` file.
pub fn load_ontology(text: &str, name: &str, normalizer: &Normalizer) -> Result<Ontology> {
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let e: OntologyEntry = serde_json::from_str(line)
            .map_err(|err| Error::format(name, i + 1, err.to_string()))?;
        if e.term.trim().is_empty() || e.concept().contains(char::is_whitespace) {
            return Err(Error::format(
                name,
                i + 1,
                "term must be non-empty and concept free of whitespace",
            ));
        }
        entries.push(e);
    }
    Ok(Ontology::new(entries, normalizer))
}

/// `entity mentions concept:<c>` for every ontology concept hit in the
/// comment's tokens.
pub fn tag_domain_concepts(comment: &Comment, entity: &str, ontology: &Ontology) -> Vec<Triple> {
    let origin = format!("{}:{}", comment.span.path, comment.span.start);
    ontology
        .concepts_in(&comment.tokens)
        .into_iter()
        .map(|c| {
            Triple::new(
                entity,
                Predicate::Mentions,
                Object::entity(ids::concept(&c)),
                Provenance::new(Source::Comment, origin.clone()),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extraction::extract_comments;

    const ONTO: &str = r#"{"term":"convex-hull","synonyms":["hull"],"concept":"convex-hull"}
{"term":"save button","synonyms":["ui save"],"concept":"save-button"}
"#;

    fn tags(src: &str) -> Vec<String> {
        let norm = Normalizer::default();
        let onto = load_ontology(ONTO, "onto", &norm).unwrap();
        let c = extract_comments(src, "a.c", &norm);
        tag_domain_concepts(&c[0], "func:a.c#f", &onto)
            .into_iter()
            .map(|t| t.object.text().to_string())
            .collect()
    }

    #[test]
    fn convex_hull_comment() {
        assert_eq!(
            tags("// compute convex hull\nvoid f(){}\n"),
            vec!["concept:convex-hull"]
        );
    }

    #[test]
    fn synonym_phrase() {
        assert_eq!(
            tags("// handler for the UI save action\n"),
            vec!["concept:save-button"]
        );
        // Non-contiguous tokens are not a phrase hit.
        assert!(tags("// UI then save\n").is_empty());
    }

    #[test]
    fn no_hits() {
        assert!(tags("// nothing relevant\n").is_empty());
    }

    #[test]
    fn strategy_keywords_from_ontology_or_defaults() {
        let norm = Normalizer::default();
        let onto =
            load_ontology(r#"{"term":"greedy choice","concept":"greedy"}"#, "o", &norm).unwrap();
        assert_eq!(
            onto.keywords_for("greedy"),
            vec![vec!["greedy".to_string(), "choice".to_string()]]
        );
        assert!(onto
            .keywords_for("divide-and-conquer")
            .contains(&vec!["divide".to_string()]));
    }

    #[test]
    fn bad_line_reports_position() {
        let err = load_ontology("{\"term\":\"a\"}\n{oops}\n", "onto", &Normalizer::default())
            .unwrap_err();
        assert!(matches!(err, Error::Format { line: 2, .. }));
    }
}
