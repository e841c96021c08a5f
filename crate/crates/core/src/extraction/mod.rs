//! Knowledge-primitive extraction from source files, comments, neutral fact
//! documents and runtime traces.

mod comments;
mod facts;
mod lexer;
mod parser;
mod trace;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::graph::{Object, Predicate, Source};

pub use comments::{associate_comments, extract_comments, Comment, CommentStyle};
pub use facts::{load_facts, write_facts, FACTS_VERSION};
pub use lexer::scope_identifiers;
pub use parser::{parse_source, THREAD_CREATE_FUNCTIONS};
pub use trace::{held_locks_at, load_trace, LocksetTracker, TraceEvent, TraceEventKind, TraceLog};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntityKind {
    File,
    Function,
    Variable,
    Type,
    Class,
    Comment,
    Bug,
    Commit,
    Developer,
    Concept,
    ThreadRoot,
}

impl EntityKind {
    pub const ALL: [EntityKind; 11] = [
        EntityKind::File,
        EntityKind::Function,
        EntityKind::Variable,
        EntityKind::Type,
        EntityKind::Class,
        EntityKind::Comment,
        EntityKind::Bug,
        EntityKind::Commit,
        EntityKind::Developer,
        EntityKind::Concept,
        EntityKind::ThreadRoot,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EntityKind::File => "file",
            EntityKind::Function => "function",
            EntityKind::Variable => "variable",
            EntityKind::Type => "type",
            EntityKind::Class => "class",
            EntityKind::Comment => "comment",
            EntityKind::Bug => "bug",
            EntityKind::Commit => "commit",
            EntityKind::Developer => "developer",
            EntityKind::Concept => "concept",
            EntityKind::ThreadRoot => "thread-root",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        EntityKind::ALL.iter().copied().find(|k| k.as_str() == s)
    }

    /// Source-code elements: the kinds commit/comment linking targets.
    pub fn is_code(self) -> bool {
        matches!(
            self,
            EntityKind::File
                | EntityKind::Function
                | EntityKind::Variable
                | EntityKind::Type
                | EntityKind::Class
        )
    }
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// File path plus 1-based inclusive line range.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub path: String,
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(path: impl Into<String>, start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Self {
            path: path.into(),
            start,
            end,
        }
    }

    pub fn contains_line(&self, line: usize) -> bool {
        self.start <= line && line <= self.end
    }

    pub fn intersects(&self, start: usize, end: usize) -> bool {
        self.start <= end && start <= self.end
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    /// Spans are inclusive, so never empty.
    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Entity {
    pub id: String,
    pub kind: EntityKind,
    pub label: String,
    pub span: Option<Span>,
    pub attrs: BTreeMap<String, String>,
}

impl Entity {
    pub fn new(id: impl Into<String>, kind: EntityKind, label: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            kind,
            label: label.into(),
            span: None,
            attrs: BTreeMap::new(),
        }
    }

    pub fn with_span(mut self, span: Span) -> Self {
        self.span = Some(span);
        self
    }

    pub fn with_attr(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.attrs.insert(key.into(), value.into());
        self
    }

    pub fn attr(&self, key: &str) -> Option<&str> {
        self.attrs.get(key).map(String::as_str)
    }

    pub fn is_global_var(&self) -> bool {
        self.kind == EntityKind::Variable && self.attr("scope") == Some("global")
    }
}

/// A relation candidate between two entities (or an entity and a literal).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Relation {
    pub subj: String,
    pub pred: Predicate,
    pub obj: Object,
    pub attrs: BTreeMap<String, String>,
}

impl Relation {
    pub fn new(subj: impl Into<String>, pred: Predicate, obj: Object) -> Self {
        Self {
            subj: subj.into(),
            pred,
            obj,
            attrs: BTreeMap::new(),
        }
    }

    pub fn with_attr(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.attrs.insert(key.into(), value.into());
        self
    }

    pub fn attr(&self, key: &str) -> Option<&str> {
        self.attrs.get(key).map(String::as_str)
    }
}

/// Where a primitive was read from.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Origin {
    pub name: String,
    pub line: usize,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.name, self.line)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Payload {
    Entity(Entity),
    Relation(Relation),
}

/// One atomic unit of extracted knowledge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnowledgePrimitive {
    pub payload: Payload,
    pub source: Source,
    pub origin: Origin,
}

/// Entities and relations extracted from one or more inputs, sorted for
/// deterministic output.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FactSet {
    pub entities: Vec<Entity>,
    pub relations: Vec<Relation>,
}

impl FactSet {
    pub fn is_empty(&self) -> bool {
        self.entities.is_empty() && self.relations.is_empty()
    }

    /// Sorts entities by id and relations lexicographically, dropping exact duplicates.
    pub fn normalize(&mut self) {
        self.entities.sort();
        self.entities.dedup();
        self.relations.sort();
        self.relations.dedup();
    }

    pub fn merge(sets: impl IntoIterator<Item = FactSet>) -> FactSet {
        let mut out = FactSet::default();
        for s in sets {
            out.entities.extend(s.entities);
            out.relations.extend(s.relations);
        }
        out.normalize();
        out
    }

    /// Redirects calls to `func:extern#<n>` and accesses through `extern`
    /// variable declarations to the unique non-static definition named `n`
    /// in another file. Names with zero or several definitions stay as they are.
    pub fn link_externs(&mut self) {
        let linkable = |e: &Entity| e.span.is_some() && e.attr("storage") != Some("static");
        let mut funcs: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        let mut vars: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for e in &self.entities {
            match e.kind {
                EntityKind::Function if e.attr("external") != Some("true") && linkable(e) => {
                    funcs.entry(&e.label).or_default().push(&e.id)
                }
                EntityKind::Variable
                    if e.is_global_var() && e.attr("storage") != Some("extern") && linkable(e) =>
                {
                    vars.entry(&e.label).or_default().push(&e.id)
                }
                _ => {}
            }
        }
        let unique =
            |m: &BTreeMap<&str, Vec<&str>>, name: &str| match m.get(name).map(Vec::as_slice) {
                Some([one]) => Some(one.to_string()),
                _ => None,
            };
        let mut remap: BTreeMap<String, String> = BTreeMap::new();
        let mut extern_vars: BTreeSet<String> = BTreeSet::new();
        for e in &self.entities {
            let target = match e.kind {
                EntityKind::Function if e.attr("external") == Some("true") => {
                    unique(&funcs, &e.label)
                }
                EntityKind::Variable
                    if e.is_global_var() && e.attr("storage") == Some("extern") =>
                {
                    unique(&vars, &e.label).filter(|t| *t != e.id)
                }
                _ => None,
            };
            if let Some(t) = target {
                if e.kind == EntityKind::Variable {
                    extern_vars.insert(e.id.clone());
                }
                remap.insert(e.id.clone(), t);
            }
        }
        if remap.is_empty() {
            return;
        }
        self.relations.retain(|r| {
            !extern_vars.contains(&r.subj)
                && !(r.pred == Predicate::Declares
                    && r.obj.as_entity().is_some_and(|o| extern_vars.contains(o)))
        });
        for r in &mut self.relations {
            if let Some(t) = remap.get(&r.subj) {
                r.subj = t.clone();
            }
            if let Some(t) = r.obj.as_entity().and_then(|o| remap.get(o)) {
                r.obj = Object::entity(t.clone());
            }
        }
        self.entities.retain(|e| !remap.contains_key(&e.id));
        self.normalize();
    }

    pub fn entity(&self, id: &str) -> Option<&Entity> {
        self.entities
            .binary_search_by(|e| e.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.entities[i])
    }

    pub fn relations_from<'a>(&'a self, subj: &'a str) -> impl Iterator<Item = &'a Relation> + 'a {
        self.relations.iter().filter(move |r| r.subj == subj)
    }

    /// The facts as provenance-carrying primitives.
    pub fn primitives(&self, source: Source) -> Vec<KnowledgePrimitive> {
        let origin_of_entity = |e: &Entity| match &e.span {
            Some(s) => Origin {
                name: s.path.clone(),
                line: s.start,
            },
            None => Origin {
                name: e.id.clone(),
                line: 0,
            },
        };
        let mut out: Vec<_> = self
            .entities
            .iter()
            .map(|e| KnowledgePrimitive {
                payload: Payload::Entity(e.clone()),
                source,
                origin: origin_of_entity(e),
            })
            .collect();
        for r in &self.relations {
            let name = crate::ids::path_of(&r.subj).unwrap_or(&r.subj).to_string();
            let line = r.attr("line").and_then(|l| l.parse().ok()).unwrap_or(0);
            out.push(KnowledgePrimitive {
                payload: Payload::Relation(r.clone()),
                source,
                origin: Origin { name, line },
            });
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn externs_link_to_unique_definitions() {
        let a = parse_source(
            "int shared;\nvoid work(void) { shared = 1; }\nstatic void hidden(void) {}\n",
            "a.c",
        );
        let b = parse_source(
            "extern int shared;\nvoid work(void);\nint main(void) { work(); hidden(); shared = 2; return 0; }\n",
            "b.c",
        );
        let mut f = FactSet::merge([a, b]);
        f.link_externs();
        let has = |s: &str, p: Predicate, o: &str| {
            f.relations
                .iter()
                .any(|r| r.subj == s && r.pred == p && r.obj.as_entity() == Some(o))
        };
        assert!(has("func:b.c#main", Predicate::Calls, "func:a.c#work"));
        assert!(has("func:b.c#main", Predicate::Writes, "var:a.c#shared"));
        assert!(has("func:b.c#main", Predicate::Calls, "func:extern#hidden"));
        assert!(f.entity("func:extern#work").is_none());
        assert!(f.entity("var:b.c#shared").is_none());
        assert!(!f
            .relations
            .iter()
            .any(|r| r.subj == "var:b.c#shared" || r.obj.as_entity() == Some("var:b.c#shared")));
    }
}
