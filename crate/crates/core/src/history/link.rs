use std::collections::{BTreeMap, BTreeSet};

use regex::Regex;

use super::{format_timestamp, BugRecord, Commit, LinkPatterns};
use crate::extraction::{Entity, EntityKind, Span};
use crate::graph::{Object, Predicate, Provenance, Source, Triple};
use crate::ids;

/// Code entities addressable by file path, for change-range intersection.
#[derive(Debug, Clone, Default)]
pub struct EntityIndex {
    files: BTreeSet<String>,
    spans: BTreeMap<String, Vec<(String, Span)>>,
}

impl EntityIndex {
    pub fn from_entities<'a>(entities: impl IntoIterator<Item = &'a Entity>) -> Self {
        let mut idx = EntityIndex::default();
        for e in entities {
            match (e.kind, &e.span) {
                (EntityKind::File, Some(s)) => {
                    idx.files.insert(s.path.clone());
                }
                (EntityKind::Function, Some(s)) => {
                    idx.spans
                        .entry(s.path.clone())
                        .or_default()
                        .push((e.id.clone(), s.clone()));
                }
                _ => {}
            }
        }
        idx
    }

    /// Exact path, else the unique known path that one is a `/`-suffix of the other.
    pub fn resolve_path(&self, path: &str) -> Option<&str> {
        if let Some(p) = self.files.get(path) {
            return Some(p);
        }
        let mut hits = self
            .files
            .iter()
            .filter(|k| k.ends_with(&format!("/{path}")) || path.ends_with(&format!("/{k}")));
        match (hits.next(), hits.next()) {
            (Some(p), None) => Some(p),
            _ => None,
        }
    }

    fn functions_in(&self, path: &str) -> &[(String, Span)] {
        self.spans.get(path).map(Vec::as_slice).unwrap_or(&[])
    }
}

#[derive(Debug, Clone, Default)]
pub struct LinkOutput {
    pub entities: Vec<Entity>,
    pub triples: Vec<Triple>,
    pub warnings: Vec<String>,
}

impl LinkOutput {
    pub fn extend(&mut self, other: LinkOutput) {
        self.entities.extend(other.entities);
        self.triples.extend(other.triples);
        self.warnings.extend(other.warnings);
    }
}

fn commit_entity(c: &Commit) -> Entity {
    Entity::new(ids::commit(&c.id), EntityKind::Commit, c.id.clone())
        .with_attr("timestamp", format_timestamp(&c.timestamp))
        .with_attr("summary", c.summary.clone())
        .with_attr("author", c.author.name.clone())
}

fn dev_entity(id: String, name: &str, email: &str) -> Entity {
    let mut e = Entity::new(id, EntityKind::Developer, name);
    if !email.is_empty() {
        e = e.with_attr("email", email);
    }
    e
}

/// `touches` edges from one commit to files and to functions whose current
/// span intersects a changed range, plus `authored-by`.
pub fn link_commit_entities(commit: &Commit, index: &EntityIndex) -> LinkOutput {
    let mut out = LinkOutput::default();
    let cid = ids::commit(&commit.id);
    let origin = format!("commits:{}", commit.line);
    out.entities.push(commit_entity(commit));

    let dev = commit.author.dev_id();
    out.entities.push(dev_entity(
        dev.clone(),
        &commit.author.name,
        &commit.author.email,
    ));
    out.triples.push(Triple::new(
        cid.clone(),
        Predicate::AuthoredBy,
        Object::entity(dev),
        Provenance::new(Source::VersionTracker, origin.clone()),
    ));

    for change in &commit.changes {
        let Some(path) = index.resolve_path(&change.path) else {
            let fid = ids::file(&change.path);
            out.entities.push(
                Entity::new(fid.clone(), EntityKind::File, change.path.clone())
                    .with_attr("missing", "true"),
            );
            out.triples.push(Triple::new(
                cid.clone(),
                Predicate::Touches,
                Object::entity(fid),
                Provenance::new(Source::VersionTracker, origin.clone()),
            ));
            out.warnings.push(format!(
                "commit {}: file `{}` not in the code base",
                commit.id, change.path
            ));
            continue;
        };
        out.triples.push(Triple::new(
            cid.clone(),
            Predicate::Touches,
            Object::entity(ids::file(path)),
            Provenance::new(Source::VersionTracker, origin.clone()),
        ));
        for (fid, span) in index.functions_in(path) {
            let hit = change
                .added
                .iter()
                .chain(&change.removed)
                .any(|r| span.intersects(r.start, r.end));
            if hit {
                out.triples.push(Triple::new(
                    cid.clone(),
                    Predicate::Touches,
                    Object::entity(fid.clone()),
                    Provenance::new(Source::VersionTracker, origin.clone())
                        .tagged("snapshot-approx"),
                ));
            }
        }
    }
    out
}

fn bug_entity(b: &BugRecord) -> Entity {
    let mut e = Entity::new(
        b.id.clone(),
        EntityKind::Bug,
        format!("{}#{}", b.tracker, b.number),
    )
    .with_attr("number", b.number.clone())
    .with_attr("tracker", b.tracker.clone())
    .with_attr("title", b.title.clone())
    .with_attr("status", b.status.as_str())
    .with_attr("opened", format_timestamp(&b.opened));
    if !b.description.is_empty() {
        e = e.with_attr("description", b.description.clone());
    }
    if let Some(c) = &b.closed {
        e = e.with_attr("closed", format_timestamp(c));
    }
    if !b.error_strings.is_empty() {
        e = e.with_attr(
            "error_strings",
            serde_json::to_string(&b.error_strings).expect("strings serialize"),
        );
    }
    e
}

/// Bug entities plus `fixes`, `mentions` and `assigned-to` edges.
pub fn link_bugs_commits(
    bugs: &[BugRecord],
    commits: &[Commit],
    patterns: &LinkPatterns,
) -> LinkOutput {
    let mut out = LinkOutput::default();
    let mut by_number: BTreeMap<&str, Vec<&BugRecord>> = BTreeMap::new();
    for b in bugs {
        by_number.entry(b.number.as_str()).or_default().push(b);
        out.entities.push(bug_entity(b));
    }

    for c in commits {
        let origin = format!("commits:{}", c.line);
        for n in patterns.bug_numbers(&c.summary) {
            match by_number.get(n.as_str()).map(Vec::as_slice) {
                Some([bug]) => out.triples.push(Triple::new(
                    ids::commit(&c.id),
                    Predicate::Fixes,
                    Object::entity(bug.id.clone()),
                    Provenance::new(Source::VersionTracker, origin.clone()),
                )),
                Some(many) if many.len() > 1 => out.warnings.push(format!(
                    "commit {}: bug #{n} is ambiguous across trackers",
                    c.id
                )),
                _ => out
                    .warnings
                    .push(format!("commit {}: bug #{n} not found", c.id)),
            }
        }
    }

    let change_requests: Vec<(BTreeSet<String>, &Commit)> = commits
        .iter()
        .map(|c| (patterns.change_requests(&c.summary), c))
        .collect();
    let mut author_email: BTreeMap<&str, &str> = BTreeMap::new();
    for c in commits {
        if !c.author.email.is_empty() {
            author_email
                .entry(c.author.name.as_str())
                .or_insert(c.author.email.as_str());
        }
    }

    for b in bugs {
        let origin = format!("bugs:{}", b.line);
        let mut mentioned: BTreeSet<String> = BTreeSet::new();
        for m in &b.mentions {
            if m.starts_with("CR") {
                for (crs, c) in &change_requests {
                    if crs.contains(m) {
                        mentioned.insert(c.id.clone());
                    }
                }
            } else {
                let hits: Vec<_> = commits
                    .iter()
                    .filter(|c| c.id.starts_with(m.as_str()))
                    .collect();
                if let [c] = hits.as_slice() {
                    mentioned.insert(c.id.clone());
                }
            }
        }
        for cid in mentioned {
            out.triples.push(Triple::new(
                b.id.clone(),
                Predicate::Mentions,
                Object::entity(ids::commit(&cid)),
                Provenance::new(Source::BugTracker, origin.clone()),
            ));
        }
        if let Some(a) = &b.assignee {
            let email = if a.contains('@') {
                Some(a.as_str())
            } else {
                author_email.get(a.as_str()).copied()
            };
            let dev = ids::dev(email.unwrap_or(a));
            out.entities
                .push(dev_entity(dev.clone(), a, email.unwrap_or("")));
            out.triples.push(Triple::new(
                b.id.clone(),
                Predicate::AssignedTo,
                Object::entity(dev),
                Provenance::new(Source::BugTracker, origin.clone()),
            ));
        }
    }
    out
}

/// Decodes the common C escapes of a source-level string literal.
fn unescape_c(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('n') => out.push('\n'),
            Some('t') => out.push('\t'),
            Some('r') => out.push('\r'),
            Some('0') => {}
            Some(other) => out.push(other),
            None => out.push('\\'),
        }
    }
    out
}

/// Whether a program string literal could have produced `error`: either
/// contains the other, or the literal read as a printf format matches it.
/// Escapes are decoded and surrounding whitespace ignored. Literals with
/// fewer than six fixed characters never match.
pub fn matches_error_string(literal: &str, error: &str) -> bool {
    let decoded = unescape_c(literal);
    let literal = decoded.trim();
    let error = error.trim();
    let spec = Regex::new(r"%[-+ #0]*(\d+|\*)?(\.(\d+|\*))?(hh|h|ll|l|L|z|j|t)?[diouxXeEfgGcsp]")
        .expect("static regex");
    let fixed: String = spec.replace_all(literal, "").to_string();
    if fixed.chars().filter(|c| !c.is_whitespace()).count() < 6 || error.is_empty() {
        return false;
    }
    if error.contains(literal) || (error.len() >= 6 && literal.contains(error)) {
        return true;
    }
    let mut pattern = String::new();
    let mut last = 0;
    for m in spec.find_iter(literal) {
        pattern.push_str(&regex::escape(&literal[last..m.start()]));
        pattern.push_str(".+?");
        last = m.end();
    }
    pattern.push_str(&regex::escape(&literal[last..]));
    Regex::new(&pattern)
        .map(|re| re.is_match(error))
        .unwrap_or(false)
}

/// `bug touches func` edges: from error strings matching a function's string
/// literals, and from functions touched by a commit that fixes the bug.
pub fn link_bug_functions(
    bugs: &[BugRecord],
    functions: &[Entity],
    history: &[Triple],
) -> Vec<Triple> {
    let mut out = Vec::new();
    for b in bugs {
        if b.error_strings.is_empty() {
            continue;
        }
        for f in functions.iter().filter(|f| f.kind == EntityKind::Function) {
            let Some(strings) = f.attr("strings") else {
                continue;
            };
            let literals: Vec<String> = serde_json::from_str(strings).unwrap_or_default();
            let hit = literals
                .iter()
                .any(|l| b.error_strings.iter().any(|e| matches_error_string(l, e)));
            if hit {
                out.push(Triple::new(
                    b.id.clone(),
                    Predicate::Touches,
                    Object::entity(f.id.clone()),
                    Provenance::new(Source::BugTracker, format!("bugs:{}", b.line))
                        .tagged("error-string"),
                ));
            }
        }
    }

    let mut fixes: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    let mut touched: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for t in history {
        match (t.predicate, t.object.as_entity()) {
            (Predicate::Fixes, Some(bug)) => fixes.entry(t.subject.as_str()).or_default().push(bug),
            (Predicate::Touches, Some(obj))
                if obj.starts_with("func:") && t.subject.starts_with("commit:") =>
            {
                touched.entry(t.subject.as_str()).or_default().push(obj)
            }
            _ => {}
        }
    }
    for (commit, bugs) in &fixes {
        for func in touched.get(commit).map(Vec::as_slice).unwrap_or(&[]) {
            for bug in bugs {
                out.push(Triple::new(
                    *bug,
                    Predicate::Touches,
                    Object::entity(*func),
                    Provenance::new(Source::VersionTracker, *commit).tagged("via-fix"),
                ));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::history::{parse_timestamp, Author, BugStatus, FileChange, LineRange};

    fn func(path: &str, name: &str, s: usize, e: usize) -> Entity {
        Entity::new(ids::func(path, name), EntityKind::Function, name)
            .with_span(Span::new(path, s, e))
    }

    fn file(path: &str, lines: usize) -> Entity {
        Entity::new(ids::file(path), EntityKind::File, path).with_span(Span::new(path, 1, lines))
    }

    fn commit(id: &str, summary: &str, path: &str, added: (usize, usize)) -> Commit {
        Commit {
            id: id.into(),
            author: Author {
                name: "Sandra".into(),
                email: "sandra@example.com".into(),
            },
            timestamp: parse_timestamp("2015-07-12T10:00:00Z").unwrap(),
            summary: summary.into(),
            changes: vec![FileChange {
                path: path.into(),
                added: vec![LineRange {
                    start: added.0,
                    end: added.1,
                }],
                removed: vec![],
            }],
            line: 2,
        }
    }

    fn bug(number: &str, mentions: &[&str]) -> BugRecord {
        BugRecord {
            id: ids::bug("CQ", number),
            tracker: "CQ".into(),
            number: number.into(),
            title: "t".into(),
            description: String::new(),
            status: BugStatus::Open,
            opened: parse_timestamp("2015-07-01").unwrap(),
            closed: None,
            assignee: Some("Sandra".into()),
            error_strings: vec![],
            mentions: mentions.iter().map(|s| s.to_string()).collect(),
            line: 2,
        }
    }

    #[test]
    fn touches_intersecting_functions_only() {
        let ents = vec![
            file("src/a.cc", 40),
            func("src/a.cc", "f", 3, 10),
            func("src/a.cc", "g", 12, 20),
        ];
        let idx = EntityIndex::from_entities(&ents);
        let out = link_commit_entities(&commit("c2", "x", "a.cc", (9, 11)), &idx);
        let objs: Vec<_> = out
            .triples
            .iter()
            .filter(|t| t.predicate == Predicate::Touches)
            .map(|t| t.object.text())
            .collect();
        assert_eq!(objs, vec!["file:src/a.cc", "func:src/a.cc#f"]);
        let func_edge = out
            .triples
            .iter()
            .find(|t| t.object.text() == "func:src/a.cc#f")
            .unwrap();
        assert_eq!(func_edge.provenance.tag.as_deref(), Some("snapshot-approx"));
        assert!(out
            .triples
            .iter()
            .any(|t| t.predicate == Predicate::AuthoredBy
                && t.object.text() == "dev:sandra@example.com"));
    }

    #[test]
    fn missing_file_is_marked() {
        let idx = EntityIndex::from_entities(&[]);
        let out = link_commit_entities(&commit("c2", "x", "gone.c", (1, 2)), &idx);
        let f = out.entities.iter().find(|e| e.id == "file:gone.c").unwrap();
        assert_eq!(f.attr("missing"), Some("true"));
        assert_eq!(out.warnings.len(), 1);
    }

    #[test]
    fn fixes_mentions_assigned() {
        let commits = vec![
            commit("abc1234", "CR123: fix bug#22", "a.cc", (1, 1)),
            commit("def5678", "fix bug#99", "a.cc", (1, 1)),
        ];
        let bugs = vec![bug("22", &["CR123"]), bug("67", &[])];
        let out = link_bugs_commits(&bugs, &commits, &LinkPatterns::default());
        let has = |s: &str, p: Predicate, o: &str| {
            out.triples
                .iter()
                .any(|t| t.subject == s && t.predicate == p && t.object.text() == o)
        };
        assert!(has("commit:abc1234", Predicate::Fixes, "bug:CQ/22"));
        assert!(has("bug:CQ/22", Predicate::Mentions, "commit:abc1234"));
        assert!(has(
            "bug:CQ/67",
            Predicate::AssignedTo,
            "dev:sandra@example.com"
        ));
        assert_eq!(out.warnings.len(), 1, "{:?}", out.warnings);
    }

    #[test]
    fn error_string_matching() {
        assert!(matches_error_string(
            "processing error : unsigned 162_S1",
            "processing error : unsigned 162_S1"
        ));
        assert!(matches_error_string(
            "processing error : unsigned %d_S1",
            "processing error : unsigned 162_S1"
        ));
        assert!(matches_error_string("fatal: %s", "fatal: disk full"));
        assert!(!matches_error_string(
            "%d",
            "processing error : unsigned 162_S1"
        ));
        assert!(!matches_error_string(
            "unrelated message",
            "processing error"
        ));
        assert!(matches_error_string(
            r"processing error : unsigned %d_S1\n",
            "processing error : unsigned 162_S1"
        ));
    }

    #[test]
    fn bug_function_links() {
        let f = func("a.cc", "f", 1, 5)
            .with_attr("strings", r#"["processing error : unsigned %d_S1"]"#);
        let mut b = bug("67", &[]);
        b.error_strings = vec!["processing error : unsigned 162_S1".into()];
        let history = vec![
            Triple::new(
                "commit:c2",
                Predicate::Fixes,
                Object::entity("bug:CQ/22"),
                Provenance::new(Source::VersionTracker, "x"),
            ),
            Triple::new(
                "commit:c2",
                Predicate::Touches,
                Object::entity("func:a.cc#g"),
                Provenance::new(Source::VersionTracker, "x"),
            ),
        ];
        let out = link_bug_functions(&[b], &[f], &history);
        let pairs: Vec<_> = out
            .iter()
            .map(|t| (t.subject.as_str(), t.object.text()))
            .collect();
        assert_eq!(
            pairs,
            vec![("bug:CQ/67", "func:a.cc#f"), ("bug:CQ/22", "func:a.cc#g")]
        );
    }
}
