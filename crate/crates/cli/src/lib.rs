//! Command implementations behind the `ckt` binary.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use ckt_core::pipeline::{self, compute_stats, LoadedGraph, Manifest};
use ckt_core::query::{
    match_freeform, parse_query, run_template, FreeformMatch, ResultSet, Suggestion, Value,
};
use ckt_core::smart::{augment, SmartAlert};
use ckt_core::{graph, Error};
use regex::Regex;
use serde::{Deserialize, Serialize};

pub const EXIT_OK: i32 = 0;
pub const EXIT_QUERY: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

/// A failed command: message plus process exit code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn input(e: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_INPUT,
            message: e.to_string(),
        }
    }

    pub fn query(e: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_QUERY,
            message: e.to_string(),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Table,
    Records,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "table" => Ok(Format::Table),
            "records" => Ok(Format::Records),
            other => Err(format!(
                "unknown format `{other}` (expected table or records)"
            )),
        }
    }
}

/// Rewrites `DD-MM-YYYY` dates to ISO `YYYY-MM-DD`. Impossible day/month
/// values are left untouched.
pub fn normalize_dates(text: &str) -> String {
    let re = Regex::new(r"\b(\d{2})-(\d{2})-(\d{4})\b").expect("static regex");
    re.replace_all(text, |c: &regex::Captures<'_>| {
        let (d, m): (u32, u32) = (c[1].parse().unwrap_or(0), c[2].parse().unwrap_or(0));
        if (1..=31).contains(&d) && (1..=12).contains(&m) {
            format!("{}-{}-{}", &c[3], &c[2], &c[1])
        } else {
            c[0].to_string()
        }
    })
    .into_owned()
}

/// How a query text is routed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Route {
    Select(String),
    Template { name: String, args: Vec<String> },
    Freeform(String),
}

/// `SELECT ...` goes to the parser, `@name(a, b)` to a template, anything
/// else to free-form matching.
pub fn route(text: &str) -> Result<Route, CliError> {
    let t = text.trim();
    let head: String = t.chars().take(6).collect();
    if head.eq_ignore_ascii_case("select") {
        return Ok(Route::Select(t.to_string()));
    }
    if let Some(rest) = t.strip_prefix('@') {
        let re = Regex::new(r"^([A-Za-z0-9_-]+)\s*\((.*)\)$").expect("static regex");
        let c = re
            .captures(rest)
            .ok_or_else(|| CliError::query("template call must look like @name(arg, ...)"))?;
        let args: Vec<String> = if c[2].trim().is_empty() {
            Vec::new()
        } else {
            c[2].split(',')
                .map(|a| a.trim().trim_matches('"').to_string())
                .collect()
        };
        return Ok(Route::Template {
            name: c[1].to_string(),
            args,
        });
    }
    Ok(Route::Freeform(t.to_string()))
}

/// An answered query.
#[derive(Debug, Clone, PartialEq)]
pub struct Response {
    pub mode: &'static str,
    pub template: Option<String>,
    pub args: Vec<String>,
    pub result: ResultSet,
}

/// A query that produced no result set.
#[derive(Debug, Clone, PartialEq)]
pub enum QueryFailure {
    Error(String),
    NoMatch {
        reason: String,
        suggestions: Vec<Suggestion>,
    },
}

impl std::fmt::Display for QueryFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            QueryFailure::Error(m) => f.write_str(m),
            QueryFailure::NoMatch {
                reason,
                suggestions,
            } => {
                write!(f, "no matching template: {reason}")?;
                if !suggestions.is_empty() {
                    let s: Vec<String> = suggestions
                        .iter()
                        .map(|s| format!("{} ({:.2})", s.template, s.score))
                        .collect();
                    write!(f, "; nearest: {}", s.join(", "))?;
                }
                Ok(())
            }
        }
    }
}

/// A loaded graph directory serving queries.
pub struct Session {
    pub loaded: LoadedGraph,
}

impl Session {
    /// Loads the graph once; with `log`, reports the load there.
    pub fn open(dir: &Path, log: Option<&mut dyn Write>) -> Result<Self, CliError> {
        let loaded = LoadedGraph::open(dir).map_err(CliError::input)?;
        if let Some(w) = log {
            let _ = writeln!(
                w,
                "loaded graph {}: {} entities, {} triples",
                dir.display(),
                loaded.graph.entity_count(),
                loaded.graph.triple_count()
            );
        }
        Ok(Self { loaded })
    }

    pub fn query(&self, text: &str) -> Result<Response, QueryFailure> {
        let text = normalize_dates(text);
        let g = &self.loaded;
        let err = |e: Error| QueryFailure::Error(e.to_string());
        let (mode, template, args, result) =
            match route(&text).map_err(|e| QueryFailure::Error(e.message))? {
                Route::Select(q) => {
                    let q = parse_query(&q).map_err(err)?;
                    (
                        "select",
                        None,
                        Vec::new(),
                        ckt_core::query::evaluate(&g.graph, &q, &g.ranks),
                    )
                }
                Route::Template { name, args } => {
                    let r = run_template(&name, &args, &g.graph, &g.templates, &g.ranks)
                        .map_err(err)?;
                    ("template", Some(name), args, r)
                }
                Route::Freeform(t) => match match_freeform(&t, &g.templates, &g.graph) {
                    FreeformMatch::Matched { template, args, .. } => {
                        let r = run_template(&template, &args, &g.graph, &g.templates, &g.ranks)
                            .map_err(err)?;
                        ("freeform", Some(template), args, r)
                    }
                    FreeformMatch::NoMatch {
                        reason,
                        suggestions,
                    } => {
                        return Err(QueryFailure::NoMatch {
                            reason,
                            suggestions,
                        })
                    }
                },
            };
        let result = augment(&result, &g.graph, g.trace.as_ref(), &g.config.smart());
        Ok(Response {
            mode,
            template,
            args,
            result,
        })
    }
}

/// One line of `--format records` output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "kebab-case")]
pub enum Record {
    Query {
        mode: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        template: Option<String>,
        #[serde(default)]
        args: Vec<String>,
        columns: Vec<String>,
    },
    Row {
        values: Vec<Value>,
    },
    Alert(SmartAlert),
    Summary {
        rows: usize,
        alerts: usize,
    },
    Error {
        message: String,
        #[serde(default)]
        suggestions: Vec<String>,
    },
}

pub fn parse_record(line: &str) -> Result<Record, String> {
    serde_json::from_str(line).map_err(|e| e.to_string())
}

fn record_line(r: &Record) -> String {
    serde_json::to_string(r).expect("records serialize") + "\n"
}

pub fn render_records(resp: &Response) -> String {
    let mut out = record_line(&Record::Query {
        mode: resp.mode.to_string(),
        template: resp.template.clone(),
        args: resp.args.clone(),
        columns: resp.result.columns.clone(),
    });
    for row in &resp.result.rows {
        out.push_str(&record_line(&Record::Row {
            values: row.clone(),
        }));
    }
    for a in &resp.result.alerts {
        out.push_str(&record_line(&Record::Alert(a.clone())));
    }
    out.push_str(&record_line(&Record::Summary {
        rows: resp.result.len(),
        alerts: resp.result.alerts.len(),
    }));
    out
}

pub fn render_failure_record(f: &QueryFailure) -> String {
    let (message, suggestions) = match f {
        QueryFailure::Error(m) => (m.clone(), Vec::new()),
        QueryFailure::NoMatch { suggestions, .. } => (
            f.to_string(),
            suggestions.iter().map(|s| s.template.clone()).collect(),
        ),
    };
    record_line(&Record::Error {
        message,
        suggestions,
    })
}

pub fn render_table(resp: &Response) -> String {
    let mut out = String::new();
    if let (Some(t), "freeform") = (&resp.template, resp.mode) {
        let _ = writeln!(out, "template: {t}({})", resp.args.join(", "));
    }
    let r = &resp.result;
    let cells: Vec<Vec<String>> = r
        .rows
        .iter()
        .map(|row| row.iter().map(ToString::to_string).collect())
        .collect();
    let headers: Vec<String> = r.columns.iter().map(|c| format!("?{c}")).collect();
    let widths: Vec<usize> = headers
        .iter()
        .enumerate()
        .map(|(i, h)| {
            cells
                .iter()
                .map(|row| row[i].chars().count())
                .chain([h.chars().count()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |vals: &[String]| {
        vals.iter()
            .zip(&widths)
            .map(|(v, w)| format!("{v:<w$}"))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let _ = writeln!(out, "{}", line(&headers));
    for row in &cells {
        let _ = writeln!(out, "{}", line(row));
    }
    let _ = writeln!(
        out,
        "({} row{})",
        r.len(),
        if r.len() == 1 { "" } else { "s" }
    );
    for a in &r.alerts {
        let _ = writeln!(out, "! [{}] {}: {}", a.kind, a.subject, a.message);
        for e in &a.evidence {
            let _ = writeln!(out, "    - {e}");
        }
    }
    out
}

pub fn render(resp: &Response, format: Format, count: bool) -> String {
    if count {
        return format!("{}\n", resp.result.len());
    }
    match format {
        Format::Table => render_table(resp),
        Format::Records => render_records(resp),
    }
}

/// `ckt build`: returns the rendered report.
pub fn cmd_build(manifest: &Path) -> Result<String, CliError> {
    let m = Manifest::load(manifest).map_err(CliError::input)?;
    let report = pipeline::build_to_disk(&m).map_err(CliError::input)?;
    Ok(report.render())
}

/// `ckt query`: formatted output, or the failure rendered for `format`.
pub fn cmd_query(
    session: &Session,
    text: &str,
    format: Format,
    count: bool,
) -> Result<String, CliError> {
    match session.query(text) {
        Ok(resp) => Ok(render(&resp, format, count)),
        Err(f) => Err(CliError {
            code: EXIT_QUERY,
            message: match format {
                Format::Records => render_failure_record(&f).trim_end().to_string(),
                Format::Table => f.to_string(),
            },
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportWhat {
    Triples,
    Stats,
}

impl std::str::FromStr for ExportWhat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "triples" => Ok(ExportWhat::Triples),
            "stats" => Ok(ExportWhat::Stats),
            other => Err(format!(
                "unknown export `{other}` (expected triples or stats)"
            )),
        }
    }
}

pub fn cmd_export(dir: &Path, what: ExportWhat) -> Result<String, CliError> {
    if !dir.is_dir() {
        return Err(CliError::input(format!(
            "{}: graph directory not found",
            dir.display()
        )));
    }
    match what {
        ExportWhat::Triples => {
            let p = dir.join(graph::TRIPLES_FILE);
            std::fs::read_to_string(&p)
                .map_err(|e| CliError::input(format!("{}: {e}", p.display())))
        }
        ExportWhat::Stats => {
            let g = LoadedGraph::open(dir).map_err(CliError::input)?;
            let stats = compute_stats(&g.graph, &g.ranks);
            Ok(serde_json::to_string_pretty(&stats).expect("stats serialize") + "\n")
        }
    }
}

const REPL_HELP: &str =
    "commands: :templates | :related <id> <radius> | :help | :quit; anything else is a query\n";

/// Interactive loop over `input`. Errors are printed and the loop goes on;
/// returns the exit code (0 on `:quit` or end of input).
pub fn run_repl(
    session: &Session,
    input: impl BufRead,
    mut out: impl Write,
    format: Format,
) -> i32 {
    for line in input.split(b'\n') {
        let Ok(bytes) = line else { break };
        let text = String::from_utf8_lossy(&bytes);
        let text = text.trim();
        if text.is_empty() {
            continue;
        }
        let reply = match text.split_whitespace().next().unwrap_or("") {
            ":quit" | ":q" => return EXIT_OK,
            ":help" => REPL_HELP.to_string(),
            ":templates" => session
                .loaded
                .templates
                .templates()
                .iter()
                .map(|t| {
                    let slots: Vec<&str> = t.slots.iter().map(|s| s.name.as_str()).collect();
                    format!(
                        "@{}({})  e.g. \"{}\"\n",
                        t.name,
                        slots.join(", "),
                        t.triggers.first().map_or("", String::as_str)
                    )
                })
                .collect(),
            ":related" => related(session, text),
            cmd if cmd.starts_with(':') => format!("error: unknown command `{cmd}`\n{REPL_HELP}"),
            _ => match cmd_query(session, text, format, false) {
                Ok(s) => s,
                Err(e) => format!("error: {}\n", e.message),
            },
        };
        if out
            .write_all(reply.as_bytes())
            .and_then(|_| out.flush())
            .is_err()
        {
            return EXIT_INPUT;
        }
    }
    EXIT_OK
}

fn related(session: &Session, text: &str) -> String {
    let parts: Vec<&str> = text.split_whitespace().collect();
    let (Some(id), radius) = (parts.get(1), parts.get(2).map(|r| r.parse::<usize>())) else {
        return "error: usage :related <id> <radius>\n".into();
    };
    let radius = match radius {
        None => 1,
        Some(Ok(r)) => r,
        Some(Err(_)) => return "error: radius must be a non-negative integer\n".into(),
    };
    match session.loaded.graph.neighborhood(id, radius) {
        Ok(sub) => {
            let mut s = String::new();
            for e in sub.entities() {
                let _ = writeln!(s, "{}\t{}\t{}", e.id, e.kind.as_str(), e.label);
            }
            for t in sub.triples() {
                let _ = writeln!(s, "{} {} {}", t.subject, t.predicate, t.object);
            }
            let _ = writeln!(
                s,
                "({} entities, {} triples)",
                sub.entity_count(),
                sub.triple_count()
            );
            s
        }
        Err(e) => format!("error: {e}\n"),
    }
}
