use std::collections::BTreeSet;

use regex::Regex;
use serde::Serialize;

use super::templates::{SlotType, TemplateRegistry};
use crate::extraction::{Entity, EntityKind};
use crate::graph::KnowledgeGraph;
use crate::ids;
use crate::text::jaccard;

/// Minimum trigger similarity for a free-form match.
pub const FREEFORM_THRESHOLD: f64 = 0.4;

/// Longest label phrase tried when filling an entity slot.
const MAX_NGRAM: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Suggestion {
    pub template: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum FreeformMatch {
    Matched {
        template: String,
        args: Vec<String>,
        score: f64,
    },
    NoMatch {
        reason: String,
        suggestions: Vec<Suggestion>,
    },
}

fn iso_date_re() -> Regex {
    Regex::new(r"\b(\d{4})-(\d{2})-(\d{2})\b").expect("static regex")
}

/// `#` and `_` are interchangeable in identifiers written in prose.
fn canon(s: &str) -> String {
    s.replace('#', "_")
}

/// Normalized phrases an entity answers to: label, id, id-derived label,
/// concept synonyms and bug numbers.
fn keys(e: &Entity, registry: &TemplateRegistry) -> BTreeSet<String> {
    let norm = registry.normalizer();
    let mut raw = vec![e.label.clone(), ids::label_of(&e.id)];
    if let Some(syn) = e.attr("synonyms") {
        raw.extend(serde_json::from_str::<Vec<String>>(syn).unwrap_or_default());
    }
    if let Some(n) = e.attr("number") {
        raw.push(n.to_string());
    }
    let mut out: BTreeSet<String> = raw
        .iter()
        .map(|r| canon(&norm.tokens(r).join(" ")))
        .filter(|k| !k.is_empty())
        .collect();
    out.insert(e.id.to_lowercase());
    out
}

/// Contiguous token runs, longest first, then leftmost first.
fn ngrams(tokens: &[String]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for n in (1..=MAX_NGRAM.min(tokens.len())).rev() {
        for start in 0..=tokens.len() - n {
            out.push((start, n));
        }
    }
    out
}

fn resolve_entity(
    tokens: &[String],
    kind: Option<EntityKind>,
    graph: &KnowledgeGraph,
    registry: &TemplateRegistry,
) -> Option<(String, usize, usize)> {
    let candidates: Vec<(&str, BTreeSet<String>)> = graph
        .entities()
        .filter(|e| kind.is_none_or(|k| k == e.kind) && e.kind != EntityKind::Comment)
        .map(|e| (e.id.as_str(), keys(e, registry)))
        .collect();
    let grams = ngrams(tokens);
    let phrase = |(s, n): (usize, usize)| canon(&tokens[s..s + n].join(" "));
    for exact in [true, false] {
        for &(s, n) in &grams {
            let p = phrase((s, n));
            let hits: BTreeSet<&str> = candidates
                .iter()
                .filter(|(_, ks)| {
                    ks.iter()
                        .any(|k| if exact { *k == p } else { k.starts_with(&p) })
                })
                .map(|(id, _)| *id)
                .collect();
            if hits.len() == 1 {
                return hits.into_iter().next().map(|id| (id.to_string(), s, n));
            }
        }
    }
    None
}

/// Routes free text to a template: the template whose best trigger has the
/// highest token-set Jaccard (ties by registry order) wins when at or above
/// the threshold; slots are then filled from the tokens the trigger did not
/// account for. Date slots take the first ISO date in the text, which is
/// left out of trigger scoring.
pub fn match_freeform(
    text: &str,
    registry: &TemplateRegistry,
    graph: &KnowledgeGraph,
) -> FreeformMatch {
    let norm = registry.normalizer();
    let dates: Vec<String> = iso_date_re()
        .find_iter(text)
        .map(|m| m.as_str().to_string())
        .collect();
    let without_dates = iso_date_re().replace_all(text, " ");
    let tokens = norm.tokens(&without_dates);
    let token_set: BTreeSet<String> = tokens.iter().cloned().collect();
    if token_set.is_empty() && dates.is_empty() {
        return FreeformMatch::NoMatch {
            reason: "empty query".into(),
            suggestions: Vec::new(),
        };
    }

    let scores: Vec<f64> = (0..registry.templates().len())
        .map(|i| {
            registry
                .trigger_sets(i)
                .iter()
                .map(|t| jaccard(&token_set, t))
                .fold(0.0, f64::max)
        })
        .collect();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|a, b| {
        scores[*b]
            .partial_cmp(&scores[*a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(b))
    });
    let suggestions: Vec<Suggestion> = order
        .iter()
        .take(3)
        .map(|&i| Suggestion {
            template: registry.templates()[i].name.clone(),
            score: scores[i],
        })
        .collect();
    let Some(&best) = order.first().filter(|&&i| scores[i] >= FREEFORM_THRESHOLD) else {
        return FreeformMatch::NoMatch {
            reason: "no template matched".into(),
            suggestions,
        };
    };

    let template = &registry.templates()[best];
    let trigger_words: BTreeSet<&String> = registry.trigger_sets(best).iter().flatten().collect();
    let mut rest: Vec<String> = tokens
        .iter()
        .filter(|t| !trigger_words.contains(t))
        .cloned()
        .collect();
    let mut dates = dates.into_iter();
    let mut args = Vec::new();
    let quoted = Regex::new(r#""([^"]+)""#).expect("static regex");
    for slot in &template.slots {
        let value = match slot.ty {
            SlotType::Date => dates.next(),
            SlotType::Number => rest
                .iter()
                .position(|t| t.parse::<f64>().is_ok())
                .map(|i| rest.remove(i)),
            SlotType::String => quoted
                .captures(text)
                .map(|c| c[1].to_string())
                .or_else(|| (!rest.is_empty()).then(|| std::mem::take(&mut rest).join(" "))),
            SlotType::Entity => {
                resolve_entity(&rest, slot.kind, graph, registry).map(|(id, s, n)| {
                    rest.drain(s..s + n);
                    id
                })
            }
        };
        match value {
            Some(v) => args.push(v),
            None => {
                return FreeformMatch::NoMatch {
                    reason: format!(
                        "matched {} but could not fill slot `{}`",
                        template.name, slot.name
                    ),
                    suggestions,
                }
            }
        }
    }
    FreeformMatch::Matched {
        template: template.name.clone(),
        args,
        score: scores[best],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{GraphBuilder, Object, Provenance, Source};

    fn graph() -> KnowledgeGraph {
        let mut b = GraphBuilder::new();
        b.add_entity(
            Entity::new("concept:save-button", EntityKind::Concept, "save button")
                .with_attr("synonyms", r#"["save button","ui save"]"#),
        )
        .unwrap();
        b.add_entity(Entity::new(
            "func:src/m.cc#OnSaveButton",
            EntityKind::Function,
            "OnSaveButton",
        ))
        .unwrap();
        b.add_entity(Entity::new(
            "func:src/V.cc#VHDLPosedge_S2",
            EntityKind::Function,
            "VHDLPosedge_S2",
        ))
        .unwrap();
        b.insert(
            "func:src/m.cc#OnSaveButton",
            "mentions",
            Object::entity("concept:save-button"),
            Provenance::new(Source::Comment, "x"),
        )
        .unwrap();
        b.finalize().unwrap()
    }

    #[test]
    fn bugs_fixed_on_a_day_resolves() {
        let r = TemplateRegistry::builtin();
        let m = match_freeform(
            "How many unsynchronised global variables are used to implement the UI Save button",
            &r,
            &graph(),
        );
        match m {
            FreeformMatch::Matched { template, args, .. } => {
                assert_eq!(template, "unsynchronized-globals-of-concept");
                assert_eq!(args, vec!["concept:save-button"]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn hash_spelling_and_prefix() {
        let r = TemplateRegistry::builtin();
        for text in [
            "which bugs affected VHDLPosedge#S2",
            "bugs affecting function vhdlpos",
        ] {
            match match_freeform(text, &r, &graph()) {
                FreeformMatch::Matched { template, args, .. } => {
                    assert_eq!(template, "bugs-affecting-function");
                    assert_eq!(args, vec!["func:src/V.cc#VHDLPosedge_S2"]);
                }
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn empty_and_unmatched() {
        let r = TemplateRegistry::builtin();
        assert_eq!(
            match_freeform("", &r, &graph()),
            FreeformMatch::NoMatch {
                reason: "empty query".into(),
                suggestions: vec![]
            }
        );
        match match_freeform("colorless green ideas sleep furiously", &r, &graph()) {
            FreeformMatch::NoMatch { suggestions, .. } => assert_eq!(suggestions.len(), 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn tie_goes_to_registry_order() {
        let reg = TemplateRegistry::from_jsonl(
            concat!(
                r#"{"name":"first","triggers":["alpha beta"],"slots":[],"body":"SELECT ?x WHERE { ?x calls ?y }"}"#,
                "\n",
                r#"{"name":"second","triggers":["alpha beta"],"slots":[],"body":"SELECT ?x WHERE { ?x calls ?y }"}"#,
            ),
            "t",
            crate::text::Normalizer::default(),
        )
        .unwrap();
        assert!(
            matches!(match_freeform("alpha beta", &reg, &graph()), FreeformMatch::Matched { template, .. } if template == "first")
        );
    }
}
