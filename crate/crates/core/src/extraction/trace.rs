//! Runtime trace records: `{"seq":1,"tid":1,"kind":"write","target":"var:a.c#g"}` per line.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceEventKind {
    Enter,
    Exit,
    Read,
    Write,
    Acquire,
    Release,
    ThreadCreate,
}

impl TraceEventKind {
    pub fn is_access(self) -> bool {
        matches!(self, TraceEventKind::Read | TraceEventKind::Write)
    }
}

impl fmt::Display for TraceEventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TraceEventKind::Enter => "enter",
            TraceEventKind::Exit => "exit",
            TraceEventKind::Read => "read",
            TraceEventKind::Write => "write",
            TraceEventKind::Acquire => "acquire",
            TraceEventKind::Release => "release",
            TraceEventKind::ThreadCreate => "thread_create",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceEvent {
    pub seq: u64,
    pub tid: u64,
    pub kind: TraceEventKind,
    pub target: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TraceLog {
    pub events: Vec<TraceEvent>,
    pub threads: BTreeSet<u64>,
    pub warnings: Vec<String>,
}

impl TraceLog {
    pub fn from_events(events: Vec<TraceEvent>) -> Self {
        let threads = events.iter().map(|e| e.tid).collect();
        let mut log = TraceLog {
            events,
            threads,
            warnings: Vec::new(),
        };
        log.warnings = dangling_releases(&log.events);
        log
    }

    pub fn event(&self, seq: u64) -> Option<&TraceEvent> {
        self.events
            .binary_search_by_key(&seq, |e| e.seq)
            .ok()
            .map(|i| &self.events[i])
    }

    /// Serializes back to the line format.
    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("trace events serialize"));
            out.push('\n');
        }
        out
    }
}

fn dangling_releases(events: &[TraceEvent]) -> Vec<String> {
    let mut held: BTreeMap<u64, BTreeSet<&str>> = BTreeMap::new();
    let mut warnings = Vec::new();
    for e in events {
        let locks = held.entry(e.tid).or_default();
        match e.kind {
            TraceEventKind::Acquire => {
                locks.insert(&e.target);
            }
            TraceEventKind::Release if !locks.remove(e.target.as_str()) => {
                warnings.push(format!(
                    "seq {}: tid {} releases `{}` without holding it",
                    e.seq, e.tid, e.target
                ));
            }
            _ => {}
        }
    }
    warnings
}

/// Parses a trace stream; `seq` must be strictly increasing.
pub fn load_trace(text: &str, name: &str) -> Result<TraceLog> {
    let mut events: Vec<TraceEvent> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let ev: TraceEvent =
            serde_json::from_str(line).map_err(|e| Error::format(name, lineno, e.to_string()))?;
        if let Some(prev) = events.last() {
            if ev.seq <= prev.seq {
                return Err(Error::format(
                    name,
                    lineno,
                    format!("sequence number {} does not follow {}", ev.seq, prev.seq),
                ));
            }
        }
        events.push(ev);
    }
    Ok(TraceLog::from_events(events))
}

/// Incremental per-thread lockset; releases of unheld locks are no-ops.
#[derive(Debug, Clone, Default)]
pub struct LocksetTracker {
    held: BTreeMap<u64, BTreeSet<String>>,
}

impl LocksetTracker {
    pub fn held(&self, tid: u64) -> BTreeSet<String> {
        self.held.get(&tid).cloned().unwrap_or_default()
    }

    pub fn held_ref(&self, tid: u64) -> Option<&BTreeSet<String>> {
        self.held.get(&tid)
    }

    pub fn apply(&mut self, e: &TraceEvent) {
        match e.kind {
            TraceEventKind::Acquire => {
                self.held.entry(e.tid).or_default().insert(e.target.clone());
            }
            TraceEventKind::Release => {
                if let Some(s) = self.held.get_mut(&e.tid) {
                    s.remove(&e.target);
                }
            }
            _ => {}
        }
    }
}

/// Locks held by the thread of `events[index]` just before it executes,
/// recomputed from the start of the trace.
pub fn held_locks_at(log: &TraceLog, index: usize) -> BTreeSet<String> {
    let tid = log.events[index].tid;
    let mut held = BTreeSet::new();
    for e in log.events[..index].iter().filter(|e| e.tid == tid) {
        match e.kind {
            TraceEventKind::Acquire => {
                held.insert(e.target.clone());
            }
            TraceEventKind::Release => {
                held.remove(&e.target);
            }
            _ => {}
        }
    }
    held
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(seq: u64, tid: u64, kind: &str, target: &str) -> String {
        format!("{{\"seq\":{seq},\"tid\":{tid},\"kind\":\"{kind}\",\"target\":\"{target}\"}}\n")
    }

    #[test]
    fn two_threads_two_writes() {
        let text = line(1, 1, "write", "var:a.c#g") + &line(2, 2, "write", "var:a.c#g");
        let log = load_trace(&text, "t").unwrap();
        assert_eq!(log.events.len(), 2);
        assert_eq!(log.threads.len(), 2);
        assert!(log.warnings.is_empty());
    }

    #[test]
    fn empty_stream() {
        let log = load_trace("", "t").unwrap();
        assert!(log.events.is_empty() && log.threads.is_empty());
    }

    #[test]
    fn guarded_write_reconstructible() {
        let text = line(1, 1, "acquire", "L")
            + &line(2, 1, "write", "var:a.c#g")
            + &line(3, 1, "release", "L");
        let log = load_trace(&text, "t").unwrap();
        assert_eq!(
            held_locks_at(&log, 1),
            ["L".to_string()].into_iter().collect()
        );
        assert!(held_locks_at(&log, 2).contains("L"));
    }

    #[test]
    fn non_monotone_and_unknown_kind() {
        let text = line(2, 1, "read", "var:a.c#g") + &line(2, 1, "read", "var:a.c#g");
        assert!(matches!(
            load_trace(&text, "t").unwrap_err(),
            Error::Format { line: 2, .. }
        ));
        let text = line(1, 1, "jump", "x");
        assert!(matches!(
            load_trace(&text, "t").unwrap_err(),
            Error::Format { line: 1, .. }
        ));
    }

    #[test]
    fn dangling_release_warns() {
        let log = load_trace(&line(1, 1, "release", "L"), "t").unwrap();
        assert_eq!(log.warnings.len(), 1);
    }
}
