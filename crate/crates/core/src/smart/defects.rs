use std::collections::BTreeSet;

use super::Evidence;
use crate::error::{Error, Result};
use crate::extraction::{Entity, EntityKind};
use crate::graph::{KnowledgeGraph, Object, Predicate, TriplePattern};
use crate::history::parse_timestamp;
use crate::text::{jaccard, Normalizer};

fn bug_tokens(e: &Entity, normalizer: &Normalizer) -> BTreeSet<String> {
    let mut text = e.attr("title").unwrap_or("").to_string();
    if let Some(raw) = e.attr("error_strings") {
        let strings: Vec<String> = serde_json::from_str(raw).unwrap_or_default();
        for s in strings {
            text.push(' ');
            text.push_str(&s);
        }
    }
    normalizer.token_set(&text)
}

fn touched_funcs<'g>(graph: &'g KnowledgeGraph, bug: &'g str) -> BTreeSet<&'g str> {
    graph
        .outgoing(bug, Predicate::Touches)
        .filter(|o| o.starts_with("func:"))
        .collect()
}

fn bug_entity<'g>(graph: &'g KnowledgeGraph, id: &str) -> Result<&'g Entity> {
    match graph.entity(id) {
        Some(e) if e.kind == EntityKind::Bug => Ok(e),
        Some(_) => Err(Error::Domain(format!("`{id}` is not a bug"))),
        None => Err(Error::NotFound(id.to_string())),
    }
}

/// Max of title/error-string token Jaccard and 1.0 for a shared touched
/// function. Symmetric by construction.
pub fn similarity(
    graph: &KnowledgeGraph,
    a: &str,
    b: &str,
    normalizer: &Normalizer,
) -> Result<f64> {
    let (ea, eb) = (bug_entity(graph, a)?, bug_entity(graph, b)?);
    let text = jaccard(&bug_tokens(ea, normalizer), &bug_tokens(eb, normalizer));
    let shared = !touched_funcs(graph, a).is_disjoint(&touched_funcs(graph, b));
    Ok(if shared { 1.0 } else { text })
}

/// Top `k` other bugs scoring at least `theta`, by score then id.
pub fn similar_defects(
    graph: &KnowledgeGraph,
    bug: &str,
    k: usize,
    theta: f64,
    normalizer: &Normalizer,
) -> Result<Vec<(String, f64)>> {
    bug_entity(graph, bug)?;
    let mut scored = Vec::new();
    for other in graph
        .entities()
        .filter(|e| e.kind == EntityKind::Bug && e.id != bug)
    {
        let s = similarity(graph, bug, &other.id, normalizer)?;
        if s >= theta {
            scored.push((other.id.clone(), s));
        }
    }
    scored.sort_by(|x, y| {
        y.1.partial_cmp(&x.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| x.0.cmp(&y.0))
    });
    scored.truncate(k);
    Ok(scored)
}

/// Shared `touches` triples when both bugs touch a function; otherwise the
/// triples that introduce the two bugs' text (anything mentioning either).
pub(crate) fn similarity_evidence(graph: &KnowledgeGraph, bug: &str, other: &str) -> Vec<Evidence> {
    let shared: BTreeSet<&str> = touched_funcs(graph, bug)
        .intersection(&touched_funcs(graph, other))
        .copied()
        .collect();
    let mut ev = Vec::new();
    if !shared.is_empty() {
        for b in [bug, other] {
            for f in &shared {
                ev.push(Evidence::Triple {
                    subject: b.to_string(),
                    predicate: Predicate::Touches,
                    object: Object::entity(*f),
                });
            }
        }
        return ev;
    }
    for b in [bug, other] {
        let obj = Object::entity(b);
        ev.extend(
            graph
                .matching(TriplePattern::new(Some(b), None, None))
                .map(|t| Evidence::triple(&t)),
        );
        ev.extend(
            graph
                .matching(TriplePattern::new(None, None, Some(&obj)))
                .map(|t| Evidence::triple(&t)),
        );
    }
    ev.sort();
    ev.dedup();
    ev
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChangeRecord {
    pub commit: String,
    pub timestamp: Option<String>,
    pub summary: String,
    pub evidence: Vec<Evidence>,
}

/// Commits touching the entity or its file (or fixing it, for bugs), newest
/// first, at most `limit`.
pub fn change_provenance(graph: &KnowledgeGraph, id: &str, limit: usize) -> Vec<ChangeRecord> {
    let mut targets = vec![(id.to_string(), Predicate::Touches)];
    if let Some(path) = crate::ids::path_of(id) {
        let file = crate::ids::file(path);
        if file != id {
            targets.push((file, Predicate::Touches));
        }
    }
    if graph.entity(id).is_some_and(|e| e.kind == EntityKind::Bug) {
        targets.push((id.to_string(), Predicate::Fixes));
    }
    let mut records: Vec<ChangeRecord> = Vec::new();
    for (target, pred) in &targets {
        let obj = Object::entity(target.as_str());
        for t in graph.matching(TriplePattern::new(None, Some(*pred), Some(&obj))) {
            if !t.subject.starts_with("commit:") {
                continue;
            }
            let ev = Evidence::triple(&t);
            if let Some(r) = records.iter_mut().find(|r| r.commit == t.subject) {
                r.evidence.push(ev);
                continue;
            }
            let e = graph.entity(t.subject);
            records.push(ChangeRecord {
                commit: t.subject.to_string(),
                timestamp: e.and_then(|e| e.attr("timestamp")).map(str::to_string),
                summary: e.and_then(|e| e.attr("summary")).unwrap_or("").to_string(),
                evidence: vec![ev],
            });
        }
    }
    let key = |r: &ChangeRecord| r.timestamp.as_deref().and_then(parse_timestamp);
    records.sort_by(|a, b| key(b).cmp(&key(a)).then_with(|| a.commit.cmp(&b.commit)));
    records.truncate(limit);
    records
}
