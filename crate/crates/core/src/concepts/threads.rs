use std::collections::{BTreeMap, BTreeSet};

use crate::extraction::{FactSet, LocksetTracker, TraceEventKind, TraceLog};
use crate::graph::{Object, Predicate, Provenance, Source, Triple};
use crate::ids;

/// Thread entry functions, statically (`threading=create` call targets) and
/// dynamically (`thread_create` trace targets), with their
/// `thread-root starts-thread func` triples.
pub fn detect_thread_roots(
    facts: &FactSet,
    trace: Option<&TraceLog>,
) -> (BTreeSet<String>, Vec<Triple>) {
    let mut roots = BTreeSet::new();
    let mut triples = Vec::new();
    for r in &facts.relations {
        if r.pred != Predicate::Calls || r.attr("threading") != Some("create") {
            continue;
        }
        let Object::Entity(f) = &r.obj else { continue };
        let path = ids::path_of(&r.subj).unwrap_or_default();
        let origin = format!("{path}:{}", r.attr("line").unwrap_or("0"));
        roots.insert(f.clone());
        triples.push(Triple::new(
            ids::thread_root_of(f),
            Predicate::StartsThread,
            Object::entity(f.clone()),
            Provenance::new(Source::SourceCode, origin),
        ));
    }
    for e in trace.into_iter().flat_map(|t| &t.events) {
        if e.kind == TraceEventKind::ThreadCreate {
            roots.insert(e.target.clone());
            triples.push(Triple::new(
                ids::thread_root_of(&e.target),
                Predicate::StartsThread,
                Object::entity(e.target.clone()),
                Provenance::new(Source::Trace, format!("trace:{}", e.seq)),
            ));
        }
    }
    (roots, triples)
}

/// `f guards v` for every trace access to `v` made inside `f` while the
/// thread holds at least one lock; the lock names go in attr `locks`.
/// Repeats of the same (function, variable, lockset) keep the first event.
pub fn detect_guarded_regions(trace: &TraceLog) -> Vec<Triple> {
    let mut tracker = LocksetTracker::default();
    let mut stacks: BTreeMap<u64, Vec<&str>> = BTreeMap::new();
    let mut seen: BTreeSet<(String, String, String)> = BTreeSet::new();
    let mut out = Vec::new();
    for e in &trace.events {
        tracker.apply(e);
        match e.kind {
            TraceEventKind::Enter => stacks.entry(e.tid).or_default().push(&e.target),
            TraceEventKind::Exit => {
                let stack = stacks.entry(e.tid).or_default();
                if let Some(pos) = stack.iter().rposition(|f| *f == e.target) {
                    stack.truncate(pos);
                }
            }
            TraceEventKind::Read | TraceEventKind::Write => {
                let Some(f) = stacks.get(&e.tid).and_then(|s| s.last()) else {
                    continue;
                };
                let Some(held) = tracker.held_ref(e.tid).filter(|h| !h.is_empty()) else {
                    continue;
                };
                let locks = held.iter().cloned().collect::<Vec<_>>().join(",");
                if seen.insert((f.to_string(), e.target.clone(), locks.clone())) {
                    out.push(Triple::new(
                        *f,
                        Predicate::Guards,
                        Object::entity(e.target.clone()),
                        Provenance::new(Source::Trace, format!("trace:{}", e.seq))
                            .with_attr("locks", locks),
                    ));
                }
            }
            _ => {}
        }
    }
    out
}

/// Eraser-style candidate lockset state of one variable.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VarLockset {
    /// `None` stands for the universe of locks (no access seen yet).
    pub candidates: Option<BTreeSet<String>>,
    pub tids: BTreeSet<u64>,
    pub writes: usize,
    /// Seqs of every access.
    pub accesses: Vec<u64>,
    /// Seqs of accesses after which the candidate set was empty.
    pub violations: Vec<u64>,
}

impl VarLockset {
    pub fn is_race(&self) -> bool {
        self.candidates.as_ref().is_some_and(BTreeSet::is_empty)
            && self.tids.len() >= 2
            && self.writes >= 1
    }
}

/// Candidate locksets for every variable accessed in the trace.
pub fn lockset_analysis(trace: &TraceLog) -> BTreeMap<String, VarLockset> {
    let mut tracker = LocksetTracker::default();
    let mut vars: BTreeMap<String, VarLockset> = BTreeMap::new();
    for e in &trace.events {
        tracker.apply(e);
        if !e.kind.is_access() {
            continue;
        }
        let st = vars.entry(e.target.clone()).or_default();
        let held = tracker.held(e.tid);
        let next = match st.candidates.take() {
            None => held,
            Some(c) => c.intersection(&held).cloned().collect(),
        };
        if next.is_empty() {
            st.violations.push(e.seq);
        }
        st.candidates = Some(next);
        st.tids.insert(e.tid);
        st.accesses.push(e.seq);
        if e.kind == TraceEventKind::Write {
            st.writes += 1;
        }
    }
    vars
}
