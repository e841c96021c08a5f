//! Conjunctive triple-pattern queries, named templates and free-form text
//! routing, with results ranked by PageRank.

mod eval;
mod freeform;
mod parser;
mod templates;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::graph::Predicate;
use crate::smart::SmartAlert;

pub use eval::{evaluate, rank_results};
pub use freeform::{match_freeform, FreeformMatch, Suggestion, FREEFORM_THRESHOLD};
pub use parser::parse_query;
pub use templates::{run_template, Slot, SlotType, Template, TemplateRegistry, BUILTIN_TEMPLATES};

/// Subject or object position of a pattern.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Node {
    Var(String),
    Id(String),
    Literal(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum PredTerm {
    Var(String),
    Pred(Predicate),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Pattern {
    pub subject: Node,
    pub predicate: PredTerm,
    pub object: Node,
}

impl Pattern {
    pub fn vars(&self) -> impl Iterator<Item = &str> {
        let s = match &self.subject {
            Node::Var(v) => Some(v.as_str()),
            _ => None,
        };
        let p = match &self.predicate {
            PredTerm::Var(v) => Some(v.as_str()),
            PredTerm::Pred(_) => None,
        };
        let o = match &self.object {
            Node::Var(v) => Some(v.as_str()),
            _ => None,
        };
        s.into_iter().chain(p).chain(o)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FilterOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Contains,
    Before,
    After,
}

impl FilterOp {
    pub const ALL: [FilterOp; 9] = [
        FilterOp::Eq,
        FilterOp::Ne,
        FilterOp::Lt,
        FilterOp::Le,
        FilterOp::Gt,
        FilterOp::Ge,
        FilterOp::Contains,
        FilterOp::Before,
        FilterOp::After,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FilterOp::Eq => "=",
            FilterOp::Ne => "!=",
            FilterOp::Lt => "<",
            FilterOp::Le => "<=",
            FilterOp::Gt => ">",
            FilterOp::Ge => ">=",
            FilterOp::Contains => "CONTAINS",
            FilterOp::Before => "BEFORE",
            FilterOp::After => "AFTER",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Filter {
    pub var: String,
    pub op: FilterOp,
    pub value: String,
}

/// `SELECT ?v.. WHERE { s p o ; .. } FILTER ?v OP lit .. LIMIT n`
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Query {
    pub select: Vec<String>,
    pub patterns: Vec<Pattern>,
    pub filters: Vec<Filter>,
    pub limit: Option<usize>,
}

pub(crate) fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Var(v) => write!(f, "?{v}"),
            Node::Id(id) => f.write_str(id),
            Node::Literal(s) => f.write_str(&quote(s)),
        }
    }
}

impl fmt::Display for PredTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PredTerm::Var(v) => write!(f, "?{v}"),
            PredTerm::Pred(p) => f.write_str(p.as_str()),
        }
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SELECT")?;
        for v in &self.select {
            write!(f, " ?{v}")?;
        }
        f.write_str(" WHERE {")?;
        for (i, p) in self.patterns.iter().enumerate() {
            let sep = if i == 0 { " " } else { " ; " };
            write!(f, "{sep}{} {} {}", p.subject, p.predicate, p.object)?;
        }
        f.write_str(" }")?;
        for flt in &self.filters {
            write!(
                f,
                " FILTER ?{} {} {}",
                flt.var,
                flt.op.as_str(),
                quote(&flt.value)
            )?;
        }
        if let Some(n) = self.limit {
            write!(f, " LIMIT {n}")?;
        }
        Ok(())
    }
}

/// A variable binding.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "lowercase")]
pub enum Value {
    Entity(String),
    Literal(String),
    Predicate(Predicate),
}

impl Value {
    pub fn text(&self) -> &str {
        match self {
            Value::Entity(s) | Value::Literal(s) => s,
            Value::Predicate(p) => p.as_str(),
        }
    }

    pub fn as_entity(&self) -> Option<&str> {
        match self {
            Value::Entity(s) => Some(s),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Literal(s) => f.write_str(&quote(s)),
            other => f.write_str(other.text()),
        }
    }
}

/// Ordered rows of bindings for the selected variables, plus attached alerts.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultSet {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
    pub alerts: Vec<SmartAlert>,
}

impl ResultSet {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Values bound to `column`, in row order.
    pub fn column(&self, column: &str) -> Vec<&Value> {
        match self.columns.iter().position(|c| c == column) {
            Some(i) => self.rows.iter().map(|r| &r[i]).collect(),
            None => Vec::new(),
        }
    }
}
