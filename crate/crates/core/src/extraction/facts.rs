//! Neutral facts format: line-delimited JSON records.
//!
//! ```text
//! {"rec":"header","version":1}
//! {"rec":"entity","id":"func:a.c#f","kind":"function","label":"f","path":"a.c","start":1,"end":3,"attrs":{}}
//! {"rec":"relation","subj":"func:a.c#f","pred":"calls","obj":"func:a.c#g"}
//! ```
//!
//! Relations may carry `"literal":true` (object is a literal) and `"attrs"`.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Entity, EntityKind, FactSet, Relation, Span};
use crate::error::{Error, Result};
use crate::graph::{Object, Predicate};
use crate::ids;

pub const FACTS_VERSION: i64 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "rec", rename_all = "lowercase", deny_unknown_fields)]
enum Record {
    Header {
        version: i64,
    },
    Entity {
        id: String,
        kind: String,
        label: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        path: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        start: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        end: Option<usize>,
        #[serde(default)]
        attrs: BTreeMap<String, String>,
    },
    Relation {
        subj: String,
        pred: String,
        obj: String,
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        literal: bool,
        #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
        attrs: BTreeMap<String, String>,
    },
}

/// Parses a neutral facts document. `name` is used in error messages.
pub fn load_facts(doc: &str, name: &str) -> Result<FactSet> {
    let mut lines = doc
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty());
    let Some((hline, header)) = lines.next() else {
        return Err(Error::format(name, 1, "missing header record"));
    };
    match serde_json::from_str::<Record>(header) {
        Ok(Record::Header { version }) if version == FACTS_VERSION => {}
        Ok(Record::Header { version }) => {
            return Err(Error::Version {
                name: name.to_string(),
                found: version,
                expected: FACTS_VERSION,
            })
        }
        Ok(_) => {
            return Err(Error::format(
                name,
                hline,
                "first record must be the header",
            ))
        }
        Err(e) => return Err(Error::format(name, hline, e.to_string())),
    }

    let mut entities: BTreeMap<String, (usize, Entity)> = BTreeMap::new();
    let mut relations = Vec::new();
    for (line, text) in lines {
        let rec: Record =
            serde_json::from_str(text).map_err(|e| Error::format(name, line, e.to_string()))?;
        match rec {
            Record::Header { .. } => {
                return Err(Error::format(name, line, "duplicate header record"))
            }
            Record::Entity {
                id,
                kind,
                label,
                path,
                start,
                end,
                attrs,
            } => {
                let entity = entity_from_record(id, &kind, label, path, start, end, attrs)
                    .map_err(|m| Error::format(name, line, m))?;
                match entities.entry(entity.id.clone()) {
                    Entry::Vacant(v) => {
                        v.insert((line, entity));
                    }
                    Entry::Occupied(o) => {
                        if o.get().1 != entity {
                            return Err(Error::Conflict {
                                name: name.to_string(),
                                id: entity.id,
                                first: o.get().0,
                                second: line,
                            });
                        }
                    }
                }
            }
            Record::Relation {
                subj,
                pred,
                obj,
                literal,
                attrs,
            } => {
                let pred: Predicate = pred
                    .parse()
                    .map_err(|e: Error| Error::format(name, line, e.to_string()))?;
                if !ids::is_well_formed(&subj) {
                    return Err(Error::format(
                        name,
                        line,
                        format!("invalid subject id `{subj}`"),
                    ));
                }
                let obj = if literal {
                    if !pred.allows_literal() {
                        return Err(Error::format(
                            name,
                            line,
                            format!("literal object not allowed for `{pred}`"),
                        ));
                    }
                    Object::Literal(obj)
                } else {
                    if !ids::is_well_formed(&obj) {
                        return Err(Error::format(
                            name,
                            line,
                            format!("invalid object id `{obj}`"),
                        ));
                    }
                    Object::Entity(obj)
                };
                relations.push(Relation {
                    subj,
                    pred,
                    obj,
                    attrs,
                });
            }
        }
    }
    let mut facts = FactSet {
        entities: entities.into_values().map(|(_, e)| e).collect(),
        relations,
    };
    facts.normalize();
    Ok(facts)
}

fn entity_from_record(
    id: String,
    kind: &str,
    label: String,
    path: Option<String>,
    start: Option<usize>,
    end: Option<usize>,
    attrs: BTreeMap<String, String>,
) -> std::result::Result<Entity, String> {
    let kind = EntityKind::parse(kind).ok_or_else(|| format!("unknown entity kind `{kind}`"))?;
    if !ids::is_well_formed(&id) {
        return Err(format!("invalid entity id `{id}`"));
    }
    let span = match (path, start, end) {
        (None, None, None) => None,
        (Some(path), Some(start), Some(end)) => {
            if start == 0 || start > end {
                return Err(format!("invalid span {start}-{end}"));
            }
            Some(Span::new(path, start, end))
        }
        _ => return Err("span needs path, start and end together".to_string()),
    };
    Ok(Entity {
        id,
        kind,
        label,
        span,
        attrs,
    })
}

/// Serializes a fact set in the neutral format (header first, entities, then relations).
pub fn write_facts(facts: &FactSet) -> String {
    let mut out = String::new();
    let mut push = |rec: &Record| {
        out.push_str(&serde_json::to_string(rec).expect("records serialize"));
        out.push('\n');
    };
    push(&Record::Header {
        version: FACTS_VERSION,
    });
    for e in &facts.entities {
        push(&Record::Entity {
            id: e.id.clone(),
            kind: e.kind.as_str().to_string(),
            label: e.label.clone(),
            path: e.span.as_ref().map(|s| s.path.clone()),
            start: e.span.as_ref().map(|s| s.start),
            end: e.span.as_ref().map(|s| s.end),
            attrs: e.attrs.clone(),
        });
    }
    for r in &facts.relations {
        push(&Record::Relation {
            subj: r.subj.clone(),
            pred: r.pred.as_str().to_string(),
            obj: r.obj.text().to_string(),
            literal: matches!(r.obj, Object::Literal(_)),
            attrs: r.attrs.clone(),
        });
    }
    out
}
