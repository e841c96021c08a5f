//! Rule-driven augmentation of query answers: data-race alerts, mutex
//! advice, similar defects, change provenance and stale comments.

mod defects;
mod races;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::extraction::{EntityKind, TraceLog};
use crate::graph::{KnowledgeGraph, Object, Predicate, TriplePattern, TripleView};
use crate::query::ResultSet;
use crate::text::Normalizer;

pub use defects::{change_provenance, similar_defects, similarity, ChangeRecord};
pub use races::{race_alert_dynamic, race_alert_static, thread_roots};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlertKind {
    RaceStatic,
    RaceDynamic,
    SimilarDefect,
    Provenance,
    MutexAdvice,
    StaleComment,
    /// A rule failed; the query itself still succeeds.
    Warning,
}

impl AlertKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AlertKind::RaceStatic => "race-static",
            AlertKind::RaceDynamic => "race-dynamic",
            AlertKind::SimilarDefect => "similar-defect",
            AlertKind::Provenance => "provenance",
            AlertKind::MutexAdvice => "mutex-advice",
            AlertKind::StaleComment => "stale-comment",
            AlertKind::Warning => "warning",
        }
    }
}

impl fmt::Display for AlertKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A triple in the graph or an event in the trace backing an alert.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "ref", rename_all = "lowercase")]
pub enum Evidence {
    Triple {
        subject: String,
        predicate: Predicate,
        object: Object,
    },
    Event {
        seq: u64,
    },
}

impl Evidence {
    pub fn triple(t: &TripleView<'_>) -> Self {
        Evidence::Triple {
            subject: t.subject.to_string(),
            predicate: t.predicate,
            object: t.object.clone(),
        }
    }
}

impl fmt::Display for Evidence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Evidence::Triple {
                subject,
                predicate,
                object,
            } => write!(f, "{subject} {predicate} {object}"),
            Evidence::Event { seq } => write!(f, "event #{seq}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmartAlert {
    pub kind: AlertKind,
    pub subject: String,
    pub evidence: Vec<Evidence>,
    pub message: String,
    pub score: f64,
}

pub const RACE_SCORE: f64 = 1.0;
pub const MUTEX_ADVICE_SCORE: f64 = 0.95;
pub const STALE_SCORE: f64 = 0.6;
pub const PROVENANCE_SCORE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct SmartConfig {
    pub alert_cap: usize,
    pub similar_threshold: f64,
    pub similar_k: usize,
    pub provenance_limit: usize,
    pub normalizer: Normalizer,
}

impl Default for SmartConfig {
    fn default() -> Self {
        Self {
            alert_cap: 10,
            similar_threshold: 0.25,
            similar_k: 3,
            provenance_limit: 5,
            normalizer: Normalizer::default(),
        }
    }
}

fn label(graph: &KnowledgeGraph, id: &str) -> String {
    graph
        .entity(id)
        .map_or_else(|| crate::ids::label_of(id), |e| e.label.clone())
}

fn race_alerts(
    graph: &KnowledgeGraph,
    var: &str,
    trace: Option<&TraceLog>,
    out: &mut Vec<SmartAlert>,
) {
    let mut fired: Vec<SmartAlert> = Vec::new();
    match race_alert_static(graph, var) {
        Ok(a) => fired.extend(a),
        Err(e) => out.push(warning(var, e)),
    }
    if let Some(t) = trace.filter(|t| {
        t.events
            .iter()
            .any(|e| e.target == var && e.kind.is_access())
    }) {
        match race_alert_dynamic(t, var) {
            Ok(a) => fired.extend(a),
            Err(e) => out.push(warning(var, e)),
        }
    }
    if !fired.is_empty() {
        let evidence: Vec<Evidence> = fired
            .iter()
            .flat_map(|a| a.evidence.iter().cloned())
            .collect();
        out.push(SmartAlert {
            kind: AlertKind::MutexAdvice,
            subject: var.to_string(),
            evidence,
            message: format!(
                "add mutex locks for read and writes of `{}`",
                label(graph, var)
            ),
            score: MUTEX_ADVICE_SCORE,
        });
    }
    out.extend(fired);
}

fn warning(subject: &str, e: crate::Error) -> SmartAlert {
    SmartAlert {
        kind: AlertKind::Warning,
        subject: subject.to_string(),
        evidence: Vec::new(),
        message: e.to_string(),
        score: 0.0,
    }
}

fn provenance_alerts(
    graph: &KnowledgeGraph,
    id: &str,
    cfg: &SmartConfig,
    out: &mut Vec<SmartAlert>,
) {
    for c in change_provenance(graph, id, cfg.provenance_limit) {
        let when = c.timestamp.as_deref().unwrap_or("unknown date");
        out.push(SmartAlert {
            kind: AlertKind::Provenance,
            subject: id.to_string(),
            message: format!(
                "changed by {} ({when}): {}",
                crate::ids::label_of(&c.commit),
                c.summary
            ),
            evidence: c.evidence,
            score: PROVENANCE_SCORE,
        });
    }
}

fn similar_alerts(graph: &KnowledgeGraph, bug: &str, cfg: &SmartConfig, out: &mut Vec<SmartAlert>) {
    let similar = match similar_defects(
        graph,
        bug,
        cfg.similar_k,
        cfg.similar_threshold,
        &cfg.normalizer,
    ) {
        Ok(s) => s,
        Err(e) => return out.push(warning(bug, e)),
    };
    for (other, score) in similar {
        let evidence = defects::similarity_evidence(graph, bug, &other);
        if evidence.is_empty() {
            continue;
        }
        out.push(SmartAlert {
            kind: AlertKind::SimilarDefect,
            subject: bug.to_string(),
            evidence,
            message: format!("similar defect {} (score {score:.2})", label(graph, &other)),
            score,
        });
    }
}

fn stale_alerts(graph: &KnowledgeGraph, id: &str, out: &mut Vec<SmartAlert>) {
    let pat = TriplePattern::new(Some(id), Some(Predicate::DocumentedBy), None);
    for t in graph.matching(pat) {
        let Some(c) = t.object.as_entity().and_then(|c| graph.entity(c)) else {
            continue;
        };
        if c.attr("stale") != Some("true") {
            continue;
        }
        let missing = c.attr("missing").unwrap_or("");
        let at = c
            .span
            .as_ref()
            .map_or_else(String::new, |s| format!(" at {}:{}", s.path, s.start));
        out.push(SmartAlert {
            kind: AlertKind::StaleComment,
            subject: id.to_string(),
            evidence: vec![Evidence::triple(&t)],
            message: format!("comment{at} mentions {missing}, not found in scope"),
            score: STALE_SCORE,
        });
    }
}

/// Attaches alerts for every entity bound in `result`, dispatching on the
/// entity's kind, then keeps the `alert_cap` highest-scoring ones. Rows are
/// never modified.
pub fn augment(
    result: &ResultSet,
    graph: &KnowledgeGraph,
    trace: Option<&TraceLog>,
    cfg: &SmartConfig,
) -> ResultSet {
    let bound: BTreeSet<&str> = result
        .rows
        .iter()
        .flatten()
        .filter_map(|v| v.as_entity())
        .collect();
    let mut alerts = Vec::new();
    for id in bound {
        let Some(e) = graph.entity(id) else { continue };
        if e.kind == EntityKind::Variable && e.attr("scope") == Some("global") {
            race_alerts(graph, id, trace, &mut alerts);
        }
        if e.kind == EntityKind::Bug {
            similar_alerts(graph, id, cfg, &mut alerts);
        }
        if e.kind.is_code() || e.kind == EntityKind::Bug {
            provenance_alerts(graph, id, cfg, &mut alerts);
        }
        stale_alerts(graph, id, &mut alerts);
    }
    let mut seen = BTreeSet::new();
    alerts.retain(|a| seen.insert((a.kind, a.subject.clone(), a.message.clone())));
    // Stable: alerts of one rule for one subject keep the rule's order
    // (provenance newest first, similar defects by score).
    alerts.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.kind.cmp(&b.kind))
            .then_with(|| a.subject.cmp(&b.subject))
    });
    alerts.truncate(cfg.alert_cap);
    ResultSet {
        columns: result.columns.clone(),
        rows: result.rows.clone(),
        alerts,
    }
}
