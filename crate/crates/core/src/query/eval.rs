use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};

use super::{Filter, FilterOp, Node, PredTerm, Query, ResultSet, Value};
use crate::graph::{KnowledgeGraph, Object, Predicate, Ranks, TriplePattern};
use crate::history::parse_timestamp;
use crate::scalar::Scalar;

type Row = BTreeMap<String, Value>;

enum Slot<T> {
    Fixed(T),
    Free(String),
    Impossible,
}

fn subject_slot(node: &Node, row: &Row) -> Slot<String> {
    match node {
        Node::Id(id) => Slot::Fixed(id.clone()),
        Node::Literal(_) => Slot::Impossible,
        Node::Var(v) => match row.get(v) {
            Some(Value::Entity(id)) => Slot::Fixed(id.clone()),
            Some(_) => Slot::Impossible,
            None => Slot::Free(v.clone()),
        },
    }
}

fn predicate_slot(term: &PredTerm, row: &Row) -> Slot<Predicate> {
    match term {
        PredTerm::Pred(p) => Slot::Fixed(*p),
        PredTerm::Var(v) => match row.get(v) {
            Some(Value::Predicate(p)) => Slot::Fixed(*p),
            Some(_) => Slot::Impossible,
            None => Slot::Free(v.clone()),
        },
    }
}

fn object_slot(node: &Node, row: &Row) -> Slot<Object> {
    match node {
        Node::Id(id) => Slot::Fixed(Object::Entity(id.clone())),
        Node::Literal(s) => Slot::Fixed(Object::Literal(s.clone())),
        Node::Var(v) => match row.get(v) {
            Some(Value::Entity(id)) => Slot::Fixed(Object::Entity(id.clone())),
            Some(Value::Literal(s)) => Slot::Fixed(Object::Literal(s.clone())),
            Some(Value::Predicate(_)) => Slot::Impossible,
            None => Slot::Free(v.clone()),
        },
    }
}

/// Binds `var` to `value`, failing when it is already bound differently.
fn bind(row: &mut Row, var: &str, value: Value) -> bool {
    match row.get(var) {
        Some(existing) => *existing == value,
        None => {
            row.insert(var.to_string(), value);
            true
        }
    }
}

fn join(graph: &KnowledgeGraph, patterns: &[super::Pattern]) -> Vec<Row> {
    let mut rows: Vec<Row> = vec![Row::new()];
    for pat in patterns {
        let mut next = Vec::new();
        for row in &rows {
            let s = subject_slot(&pat.subject, row);
            let p = predicate_slot(&pat.predicate, row);
            let o = object_slot(&pat.object, row);
            if matches!(s, Slot::Impossible)
                || matches!(p, Slot::Impossible)
                || matches!(o, Slot::Impossible)
            {
                continue;
            }
            let s_fixed = if let Slot::Fixed(x) = &s {
                Some(x.as_str())
            } else {
                None
            };
            let p_fixed = if let Slot::Fixed(x) = &p {
                Some(*x)
            } else {
                None
            };
            let o_fixed = if let Slot::Fixed(x) = &o {
                Some(x)
            } else {
                None
            };
            for t in graph.matching(TriplePattern::new(s_fixed, p_fixed, o_fixed)) {
                let mut r = row.clone();
                let mut ok = true;
                if let Slot::Free(v) = &s {
                    ok &= bind(&mut r, v, Value::Entity(t.subject.to_string()));
                }
                if let Slot::Free(v) = &p {
                    ok &= bind(&mut r, v, Value::Predicate(t.predicate));
                }
                if let Slot::Free(v) = &o {
                    ok &= bind(&mut r, v, object_value(t.object));
                }
                if ok {
                    next.push(r);
                }
            }
        }
        rows = next;
        if rows.is_empty() {
            break;
        }
    }
    rows
}

fn object_value(o: &Object) -> Value {
    match o {
        Object::Entity(id) => Value::Entity(id.clone()),
        Object::Literal(s) => Value::Literal(s.clone()),
    }
}

/// Timestamp carried by a binding: an entity's `timestamp`, `closed` or
/// `opened` attribute, or a literal that parses as one.
fn timestamp_of(graph: &KnowledgeGraph, v: &Value) -> Option<DateTime<Utc>> {
    match v {
        Value::Entity(id) => {
            let e = graph.entity(id)?;
            ["timestamp", "closed", "opened"]
                .iter()
                .find_map(|k| e.attr(k))
                .and_then(parse_timestamp)
        }
        Value::Literal(s) => parse_timestamp(s),
        Value::Predicate(_) => None,
    }
}

fn compare_text(a: &str, b: &str) -> Ordering {
    match (a.trim().parse::<f64>(), b.trim().parse::<f64>()) {
        (Ok(x), Ok(y)) => x.partial_cmp(&y).unwrap_or(Ordering::Equal),
        _ => a.cmp(b),
    }
}

/// Filter semantics, per binding kind:
/// - `=`/`!=`: entity id or label; otherwise the text.
/// - `CONTAINS`: substring of the entity id, label or any attribute value.
/// - `<`..`>=`: numeric when both sides parse as numbers, else lexicographic;
///   an entity compares by its label.
/// - `BEFORE` (strictly earlier) / `AFTER` (same instant or later):
///   timestamp-valued bindings only; others never pass.
pub(crate) fn filter_holds(graph: &KnowledgeGraph, v: &Value, f: &Filter) -> bool {
    let lit = f.value.as_str();
    let entity = v.as_entity().and_then(|id| graph.entity(id));
    let primary = match (v, entity) {
        (Value::Entity(_), Some(e)) => e.label.as_str(),
        _ => v.text(),
    };
    match f.op {
        FilterOp::Eq | FilterOp::Ne => {
            let eq = v.text() == lit || primary == lit;
            eq == (f.op == FilterOp::Eq)
        }
        FilterOp::Contains => {
            v.text().contains(lit)
                || entity.is_some_and(|e| {
                    e.label.contains(lit) || e.attrs.values().any(|a| a.contains(lit))
                })
        }
        FilterOp::Lt => compare_text(primary, lit) == Ordering::Less,
        FilterOp::Le => compare_text(primary, lit) != Ordering::Greater,
        FilterOp::Gt => compare_text(primary, lit) == Ordering::Greater,
        FilterOp::Ge => compare_text(primary, lit) != Ordering::Less,
        FilterOp::Before | FilterOp::After => {
            let (Some(t), Some(bound)) = (timestamp_of(graph, v), parse_timestamp(lit)) else {
                return false;
            };
            if f.op == FilterOp::Before {
                t < bound
            } else {
                t >= bound
            }
        }
    }
}

/// Evaluates a query: left-to-right index-backed joins, then filters,
/// projection, de-duplication, ranking and the limit.
pub fn evaluate<T: Scalar>(graph: &KnowledgeGraph, query: &Query, ranks: &Ranks<T>) -> ResultSet {
    let rows = join(graph, &query.patterns);
    let mut projected: BTreeSet<Vec<Value>> = BTreeSet::new();
    for row in rows {
        let pass = query
            .filters
            .iter()
            .all(|f| row.get(&f.var).is_some_and(|v| filter_holds(graph, v, f)));
        if pass {
            let proj: Option<Vec<Value>> =
                query.select.iter().map(|v| row.get(v).cloned()).collect();
            projected.extend(proj);
        }
    }
    let mut rows = rank_results(projected.into_iter().collect(), ranks);
    if let Some(n) = query.limit {
        rows.truncate(n);
    }
    ResultSet {
        columns: query.select.clone(),
        rows,
        alerts: Vec::new(),
    }
}

/// Stable order: rank of the first column's binding descending (non-entities
/// and unranked ids count as 0), then the row's binding texts ascending.
pub fn rank_results<T: Scalar>(mut rows: Vec<Vec<Value>>, ranks: &Ranks<T>) -> Vec<Vec<Value>> {
    let rank = |row: &Vec<Value>| {
        row.first()
            .and_then(Value::as_entity)
            .map_or_else(T::zero, |id| ranks.get(id))
    };
    rows.sort_by(|a, b| {
        rank(b)
            .partial_cmp(&rank(a))
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.iter().map(Value::text).cmp(b.iter().map(Value::text)))
    });
    rows
}
