//! Commit-log and bug-tracker exports, and the links they induce between
//! commits, bugs, developers and code.

mod link;

use std::collections::BTreeSet;

use chrono::{DateTime, NaiveDate, SecondsFormat, Utc};
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use link::{
    link_bug_functions, link_bugs_commits, link_commit_entities, matches_error_string, EntityIndex,
    LinkOutput,
};

pub const EXPORT_VERSION: i64 = 1;

/// Parses an ISO-8601 / RFC 3339 timestamp; a bare `YYYY-MM-DD` means midnight UTC.
pub fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc));
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|d| d.and_utc())
}

pub fn format_timestamp(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct LineRange {
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileChange {
    pub path: String,
    pub added: Vec<LineRange>,
    pub removed: Vec<LineRange>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Author {
    pub name: String,
    pub email: String,
}

impl Author {
    /// `dev:<email>` when an email is known, else `dev:<name>`.
    pub fn dev_id(&self) -> String {
        if self.email.is_empty() {
            crate::ids::dev(&self.name)
        } else {
            crate::ids::dev(&self.email)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Commit {
    pub id: String,
    pub author: Author,
    pub timestamp: DateTime<Utc>,
    pub summary: String,
    pub changes: Vec<FileChange>,
    /// Line of the record in its export.
    pub line: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BugStatus {
    Open,
    Fixed,
    Closed,
    Other,
}

impl BugStatus {
    fn parse(s: &str) -> Self {
        match s.to_ascii_lowercase().as_str() {
            "open" => BugStatus::Open,
            "fixed" => BugStatus::Fixed,
            "closed" => BugStatus::Closed,
            _ => BugStatus::Other,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BugStatus::Open => "open",
            BugStatus::Fixed => "fixed",
            BugStatus::Closed => "closed",
            BugStatus::Other => "other",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BugRecord {
    /// `bug:<tracker>/<number>`
    pub id: String,
    pub tracker: String,
    pub number: String,
    pub title: String,
    pub description: String,
    pub status: BugStatus,
    pub opened: DateTime<Utc>,
    pub closed: Option<DateTime<Utc>>,
    pub assignee: Option<String>,
    pub error_strings: Vec<String>,
    /// Change-request tokens (`CR123`) and commit hashes found in the text.
    pub mentions: Vec<String>,
    pub line: usize,
}

/// Regexes that recognize bug and change-request references in free text.
/// The first capture group is the number.
#[derive(Debug, Clone)]
pub struct LinkPatterns {
    pub bug: Vec<Regex>,
    pub change: Vec<Regex>,
}

impl Default for LinkPatterns {
    fn default() -> Self {
        Self::new(&[r"(?i)\bbug#(\d+)"], &[r"(?i)\bCR(\d+)"]).expect("default patterns compile")
    }
}

impl LinkPatterns {
    pub fn new<S: AsRef<str>>(bug: &[S], change: &[S]) -> Result<Self> {
        let compile = |pats: &[S]| -> Result<Vec<Regex>> {
            pats.iter()
                .map(|p| {
                    let re = Regex::new(p.as_ref())
                        .map_err(|e| Error::Config(format!("bad pattern `{}`: {e}", p.as_ref())))?;
                    if re.captures_len() < 2 {
                        return Err(Error::Config(format!(
                            "pattern `{}` needs a capture group",
                            p.as_ref()
                        )));
                    }
                    Ok(re)
                })
                .collect()
        };
        Ok(Self {
            bug: compile(bug)?,
            change: compile(change)?,
        })
    }

    pub fn bug_numbers(&self, text: &str) -> BTreeSet<String> {
        numbers(&self.bug, text)
    }

    /// Change-request tokens, normalized to `CR<number>`.
    pub fn change_requests(&self, text: &str) -> BTreeSet<String> {
        numbers(&self.change, text)
            .into_iter()
            .map(|n| format!("CR{n}"))
            .collect()
    }
}

fn numbers(res: &[Regex], text: &str) -> BTreeSet<String> {
    res.iter()
        .flat_map(|re| {
            re.captures_iter(text)
                .filter_map(|c| c.get(1))
                .map(|m| m.as_str().to_string())
                .collect::<Vec<_>>()
        })
        .collect()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExportHeader {
    rec: String,
    version: i64,
    #[serde(default)]
    #[allow(dead_code)]
    source: Option<String>,
}

fn check_header<'a>(lines: &mut impl Iterator<Item = (usize, &'a str)>, name: &str) -> Result<()> {
    let Some((line, text)) = lines.next() else {
        return Err(Error::format(name, 1, "missing header record"));
    };
    let h: ExportHeader = serde_json::from_str(text)
        .map_err(|e| Error::format(name, line, format!("bad header: {e}")))?;
    if h.rec != "header" {
        return Err(Error::format(name, line, "first record must be the header"));
    }
    if h.version != EXPORT_VERSION {
        return Err(Error::Version {
            name: name.to_string(),
            found: h.version,
            expected: EXPORT_VERSION,
        });
    }
    Ok(())
}

fn non_blank_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChangeRecord {
    path: String,
    #[serde(default)]
    added: Vec<(usize, usize)>,
    #[serde(default)]
    removed: Vec<(usize, usize)>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CommitRecord {
    id: String,
    author_name: String,
    #[serde(default)]
    author_email: String,
    timestamp: String,
    summary: String,
    #[serde(default)]
    changes: Vec<ChangeRecord>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CommitLog {
    /// Ascending by timestamp, then id.
    pub commits: Vec<Commit>,
    pub warnings: Vec<String>,
}

fn ranges(v: Vec<(usize, usize)>) -> std::result::Result<Vec<LineRange>, String> {
    v.into_iter()
        .map(|(start, end)| {
            if start > end {
                Err(format!("range {start}-{end} has start > end"))
            } else {
                Ok(LineRange { start, end })
            }
        })
        .collect()
}

/// Loads a commit export. Malformed records are skipped with a warning.
pub fn load_commits(text: &str, name: &str) -> Result<CommitLog> {
    let mut lines = non_blank_lines(text);
    check_header(&mut lines, name)?;
    let mut log = CommitLog::default();
    for (line, rec) in lines {
        let parsed = serde_json::from_str::<CommitRecord>(rec)
            .map_err(|e| e.to_string())
            .and_then(|r| {
                let timestamp = parse_timestamp(&r.timestamp)
                    .ok_or_else(|| format!("bad timestamp `{}`", r.timestamp))?;
                if r.id.is_empty() || r.id.contains(char::is_whitespace) {
                    return Err(format!("bad commit id `{}`", r.id));
                }
                let changes = r
                    .changes
                    .into_iter()
                    .map(|c| {
                        Ok(FileChange {
                            path: c.path,
                            added: ranges(c.added)?,
                            removed: ranges(c.removed)?,
                        })
                    })
                    .collect::<std::result::Result<Vec<_>, String>>()?;
                Ok(Commit {
                    id: r.id,
                    author: Author {
                        name: r.author_name,
                        email: r.author_email,
                    },
                    timestamp,
                    summary: r.summary,
                    changes,
                    line,
                })
            });
        match parsed {
            Ok(c) => log.commits.push(c),
            Err(m) => log.warnings.push(format!("{name}:{line}: {m}")),
        }
    }
    log.commits
        .sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.id.cmp(&b.id)));
    Ok(log)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BugRow {
    id: serde_json::Value,
    tracker: String,
    title: String,
    #[serde(default)]
    description: String,
    status: String,
    opened: String,
    #[serde(default)]
    closed: Option<String>,
    #[serde(default)]
    assignee: Option<String>,
    #[serde(default)]
    error_strings: Vec<String>,
}

fn quoted_strings(text: &str) -> Vec<String> {
    let re = Regex::new(r#""([^"\n]{3,})""#).expect("static regex");
    re.captures_iter(text)
        .map(|c| c[1].trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

fn commit_hashes(text: &str) -> Vec<String> {
    let re = Regex::new(r"\b[0-9a-f]{7,40}\b").expect("static regex");
    re.find_iter(text)
        .map(|m| m.as_str())
        .filter(|h| {
            h.chars().any(|c| c.is_ascii_alphabetic()) && h.chars().any(|c| c.is_ascii_digit())
        })
        .map(str::to_string)
        .collect()
}

/// Loads a bug export, filling `error_strings` (declared plus double-quoted
/// text) and `mentions` (change requests and commit hashes).
pub fn load_bugs(text: &str, name: &str, patterns: &LinkPatterns) -> Result<Vec<BugRecord>> {
    let mut lines = non_blank_lines(text);
    check_header(&mut lines, name)?;
    let mut bugs: Vec<BugRecord> = Vec::new();
    let mut seen: std::collections::BTreeMap<String, usize> = Default::default();
    for (line, rec) in lines {
        let row: BugRow =
            serde_json::from_str(rec).map_err(|e| Error::format(name, line, e.to_string()))?;
        let number = match &row.id {
            serde_json::Value::String(s) => s.clone(),
            serde_json::Value::Number(n) => n.to_string(),
            other => return Err(Error::format(name, line, format!("bad bug id {other}"))),
        };
        if number.is_empty() || row.tracker.is_empty() || row.tracker.contains(['/', '\t']) {
            return Err(Error::format(
                name,
                line,
                "bug id and tracker must be non-empty",
            ));
        }
        let id = crate::ids::bug(&row.tracker, &number);
        if let Some(&first) = seen.get(&id) {
            return Err(Error::Conflict {
                name: name.to_string(),
                id,
                first,
                second: line,
            });
        }
        seen.insert(id.clone(), line);
        let opened = parse_timestamp(&row.opened).ok_or_else(|| {
            Error::format(name, line, format!("bad opened timestamp `{}`", row.opened))
        })?;
        let closed =
            match row.closed.as_deref().filter(|s| !s.is_empty()) {
                Some(s) => Some(parse_timestamp(s).ok_or_else(|| {
                    Error::format(name, line, format!("bad closed timestamp `{s}`"))
                })?),
                None => None,
            };
        if closed.is_some_and(|c| c < opened) {
            return Err(Error::Validation(format!(
                "{name}:{line}: bug {id} closed before it was opened"
            )));
        }
        let full_text = format!("{}\n{}", row.title, row.description);
        let mut error_strings = row.error_strings;
        for q in quoted_strings(&full_text) {
            if !error_strings.contains(&q) {
                error_strings.push(q);
            }
        }
        let mut mentions: Vec<String> = patterns.change_requests(&full_text).into_iter().collect();
        for h in commit_hashes(&full_text) {
            if !mentions.contains(&h) {
                mentions.push(h);
            }
        }
        bugs.push(BugRecord {
            id,
            tracker: row.tracker,
            number,
            title: row.title,
            description: row.description,
            status: BugStatus::parse(&row.status),
            opened,
            closed,
            assignee: row.assignee.filter(|a| !a.is_empty()),
            error_strings,
            mentions,
            line,
        });
    }
    bugs.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(bugs)
}

#[cfg(test)]
mod tests {
    use super::*;

    const CH: &str = "{\"rec\":\"header\",\"version\":1,\"source\":\"git\"}\n";
    const BH: &str = "{\"rec\":\"header\",\"version\":1,\"source\":\"clearquest\"}\n";

    #[test]
    fn commits_sorted_ascending() {
        let text = format!(
            "{CH}{}\n{}\n",
            r#"{"id":"b2","author_name":"S","author_email":"s@x","timestamp":"2015-07-12T10:00:00Z","summary":"later","changes":[]}"#,
            r#"{"id":"a1","author_name":"S","author_email":"s@x","timestamp":"2015-06-01T10:00:00Z","summary":"earlier","changes":[{"path":"VHDLPosedge.cc","added":[[1,20]],"removed":[]}]}"#
        );
        let log = load_commits(&text, "commits").unwrap();
        let ids: Vec<_> = log.commits.iter().map(|c| c.id.as_str()).collect();
        assert_eq!(ids, vec!["a1", "b2"]);
        assert_eq!(
            log.commits[0].changes[0].added,
            vec![LineRange { start: 1, end: 20 }]
        );
    }

    #[test]
    fn empty_after_header_and_missing_header() {
        assert!(load_commits(CH, "c").unwrap().commits.is_empty());
        assert!(matches!(load_commits("", "c"), Err(Error::Format { .. })));
        assert!(matches!(
            load_commits("{\"rec\":\"header\",\"version\":3}\n", "c"),
            Err(Error::Version { found: 3, .. })
        ));
    }

    #[test]
    fn malformed_commit_is_a_warning() {
        let text = format!(
            "{CH}not json\n{}\n",
            r#"{"id":"a1","author_name":"S","timestamp":"yesterday","summary":"x"}"#
        );
        let log = load_commits(&text, "c").unwrap();
        assert!(log.commits.is_empty());
        assert_eq!(log.warnings.len(), 2);
        assert!(log.warnings[0].starts_with("c:2:"));
    }

    #[test]
    fn scenario_bugs() {
        let text = format!(
            "{BH}{}\n{}\n",
            r#"{"id":"67","tracker":"CQ","title":"processing error","description":"Run fails with \"processing error : unsigned 162_S1\"","status":"open","opened":"2015-08-20T09:00:00Z","closed":null,"assignee":"Neha","error_strings":["processing error : unsigned 162_S1"]}"#,
            r#"{"id":"22","tracker":"CQ","title":"unsigned overflow","description":"Fixed as part of CR123","status":"fixed","opened":"2015-07-01T09:00:00Z","closed":"2015-07-12T12:00:00Z","assignee":"Sandra","error_strings":[]}"#
        );
        let bugs = load_bugs(&text, "bugs", &LinkPatterns::default()).unwrap();
        let b67 = bugs.iter().find(|b| b.number == "67").unwrap();
        assert_eq!(
            b67.error_strings,
            vec!["processing error : unsigned 162_S1"]
        );
        assert_eq!(b67.id, "bug:CQ/67");
        let b22 = bugs.iter().find(|b| b.number == "22").unwrap();
        assert!(b22.mentions.contains(&"CR123".to_string()));
        assert_eq!(b22.status, BugStatus::Fixed);
    }

    #[test]
    fn bug_validation() {
        let bad = format!(
            "{BH}{}\n",
            r#"{"id":"1","tracker":"CQ","title":"t","status":"fixed","opened":"2015-07-02T00:00:00Z","closed":"2015-07-01T00:00:00Z"}"#
        );
        assert!(matches!(
            load_bugs(&bad, "b", &LinkPatterns::default()),
            Err(Error::Validation(_))
        ));
        let row = r#"{"id":"1","tracker":"CQ","title":"t","status":"open","opened":"2015-07-02T00:00:00Z"}"#;
        let dup = format!("{BH}{row}\n{row}\n");
        assert!(matches!(
            load_bugs(&dup, "b", &LinkPatterns::default()),
            Err(Error::Conflict {
                first: 2,
                second: 3,
                ..
            })
        ));
    }

    #[test]
    fn pattern_extraction() {
        let p = LinkPatterns::default();
        assert_eq!(
            p.bug_numbers("Fix BUG#22 and bug#7")
                .into_iter()
                .collect::<Vec<_>>(),
            vec!["22", "7"]
        );
        assert_eq!(
            p.change_requests("part of cr123")
                .into_iter()
                .collect::<Vec<_>>(),
            vec!["CR123"]
        );
        assert!(LinkPatterns::new(&["bug"], &["CR(\\d+)"]).is_err());
    }

    #[test]
    fn timestamps() {
        assert!(parse_timestamp("2013-03-12T00:00:00Z").is_some());
        assert!(parse_timestamp("2013-03-12").is_some());
        assert!(parse_timestamp("12-03-2013").is_none());
        let t = parse_timestamp("2013-03-12T05:00:00+02:00").unwrap();
        assert_eq!(format_timestamp(&t), "2013-03-12T03:00:00Z");
    }
}
