use std::collections::BTreeSet;

use chrono::Duration;
use serde::{Deserialize, Serialize};

use super::{evaluate, parse_query, quote, Query, ResultSet};
use crate::error::{Error, Result};
use crate::extraction::EntityKind;
use crate::graph::{KnowledgeGraph, Ranks};
use crate::history::{format_timestamp, parse_timestamp};
use crate::scalar::Scalar;
use crate::text::Normalizer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlotType {
    Entity,
    Date,
    Number,
    String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Slot {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: SlotType,
    /// Entity kind an entity slot accepts; any kind when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<EntityKind>,
}

/// A named query with `$slot` holes. A date slot also offers `$slot.next`,
/// the following day.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Template {
    pub name: String,
    pub triggers: Vec<String>,
    pub slots: Vec<Slot>,
    pub body: String,
}

/// Hole occurrences in a body: (byte range, slot name, `.next` suffix).
fn holes(body: &str) -> Vec<(std::ops::Range<usize>, &str, bool)> {
    let re = regex::Regex::new(r"\$([A-Za-z_][A-Za-z0-9_]*)(\.next)?").expect("static regex");
    re.captures_iter(body)
        .map(|c| {
            let m = c.get(0).expect("whole match");
            (
                m.range(),
                c.get(1).expect("name").as_str(),
                c.get(2).is_some(),
            )
        })
        .collect()
}

impl Template {
    fn validate(&self) -> Result<()> {
        let names: BTreeSet<&str> = self.slots.iter().map(|s| s.name.as_str()).collect();
        if names.len() != self.slots.len() {
            return Err(Error::Config(format!(
                "template {}: duplicate slot name",
                self.name
            )));
        }
        for (_, name, next) in holes(&self.body) {
            let Some(slot) = self.slots.iter().find(|s| s.name == name) else {
                return Err(Error::Config(format!(
                    "template {}: hole ${name} has no slot",
                    self.name
                )));
            };
            if next && slot.ty != SlotType::Date {
                return Err(Error::Config(format!(
                    "template {}: ${name}.next needs a date slot",
                    self.name
                )));
            }
        }
        let sample: Vec<String> = self
            .slots
            .iter()
            .map(|s| match s.ty {
                SlotType::Entity => "file:x".to_string(),
                SlotType::Date => quote("2000-01-01T00:00:00Z"),
                SlotType::Number => "1".to_string(),
                SlotType::String => quote("x"),
            })
            .collect();
        parse_query(&self.substitute(&sample, &sample))
            .map(|_| ())
            .map_err(|e| Error::Config(format!("template {}: body does not parse: {e}", self.name)))
    }

    /// Replaces each hole with the rendered value of its slot (`nexts` for `.next`).
    fn substitute(&self, values: &[String], nexts: &[String]) -> String {
        let mut out = String::new();
        let mut last = 0;
        for (range, name, next) in holes(&self.body) {
            let i = self
                .slots
                .iter()
                .position(|s| s.name == name)
                .expect("validated hole");
            out.push_str(&self.body[last..range.start]);
            out.push_str(if next { &nexts[i] } else { &values[i] });
            last = range.end;
        }
        out.push_str(&self.body[last..]);
        out
    }

    /// Checks and renders `args` (one per slot, in order) and parses the
    /// resulting query. Entity arguments may be ids or unique labels.
    pub fn instantiate(&self, args: &[String], graph: &KnowledgeGraph) -> Result<Query> {
        if args.len() > self.slots.len() {
            return Err(Error::Slot {
                slot: self
                    .slots
                    .last()
                    .map_or_else(|| self.name.clone(), |s| s.name.clone()),
                message: format!(
                    "{} takes {} argument(s), got {}",
                    self.name,
                    self.slots.len(),
                    args.len()
                ),
            });
        }
        let mut values = Vec::new();
        let mut nexts = Vec::new();
        for (i, slot) in self.slots.iter().enumerate() {
            let slot_err = |message: String| Error::Slot {
                slot: slot.name.clone(),
                message,
            };
            let arg = args
                .get(i)
                .map(|a| a.trim())
                .filter(|a| !a.is_empty())
                .ok_or_else(|| slot_err("missing argument".into()))?;
            let (value, next) = match slot.ty {
                SlotType::Entity => {
                    let id = resolve_entity_arg(arg, slot.kind, graph).map_err(slot_err)?;
                    (id.clone(), id)
                }
                SlotType::Date => {
                    let t = parse_timestamp(arg)
                        .ok_or_else(|| slot_err(format!("`{arg}` is not an ISO-8601 date")))?;
                    (
                        quote(&format_timestamp(&t)),
                        quote(&format_timestamp(&(t + Duration::days(1)))),
                    )
                }
                SlotType::Number => {
                    arg.parse::<f64>()
                        .map_err(|_| slot_err(format!("`{arg}` is not a number")))?;
                    (arg.to_string(), arg.to_string())
                }
                SlotType::String => (quote(arg), quote(arg)),
            };
            values.push(value);
            nexts.push(next);
        }
        parse_query(&self.substitute(&values, &nexts))
    }
}

fn resolve_entity_arg(
    arg: &str,
    kind: Option<EntityKind>,
    graph: &KnowledgeGraph,
) -> std::result::Result<String, String> {
    let kind_ok = |k: EntityKind| kind.is_none_or(|want| want == k);
    let describe = |k: Option<EntityKind>| k.map_or("entity".to_string(), |k| k.to_string());
    if let Some(e) = graph.entity(arg) {
        if !kind_ok(e.kind) {
            return Err(format!(
                "expected a {}, `{arg}` is a {}",
                describe(kind),
                e.kind
            ));
        }
        if arg.contains(|c: char| c.is_whitespace() || matches!(c, '{' | '}' | ';' | '"')) {
            return Err(format!("`{arg}` cannot be written in a query"));
        }
        return Ok(arg.to_string());
    }
    let hits: Vec<&str> = graph
        .entities()
        .filter(|e| kind_ok(e.kind) && e.label == arg)
        .map(|e| e.id.as_str())
        .collect();
    match hits.as_slice() {
        [id] => Ok(id.to_string()),
        [] => Err(format!("no {} `{arg}` in the graph", describe(kind))),
        _ => Err(format!("`{arg}` is ambiguous: {}", hits.join(", "))),
    }
}

/// Ordered template collection; order breaks free-form ties.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateRegistry {
    templates: Vec<Template>,
    /// Per template, the normalized token set of each trigger.
    triggers: Vec<Vec<BTreeSet<String>>>,
    normalizer: Normalizer,
}

/// The shipped registry, one JSON record per line.
pub const BUILTIN_TEMPLATES: &str = include_str!("builtin_templates.jsonl");

impl TemplateRegistry {
    pub fn new(templates: Vec<Template>, normalizer: Normalizer) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for t in &templates {
            if !seen.insert(t.name.as_str()) {
                return Err(Error::Config(format!("duplicate template `{}`", t.name)));
            }
            t.validate()?;
        }
        let triggers = templates
            .iter()
            .map(|t| {
                t.triggers
                    .iter()
                    .map(|tr| normalizer.token_set(tr))
                    .collect()
            })
            .collect();
        Ok(Self {
            templates,
            triggers,
            normalizer,
        })
    }

    /// Parses a line-delimited registry.
    pub fn from_jsonl(text: &str, name: &str, normalizer: Normalizer) -> Result<Self> {
        let mut templates = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let t: Template = serde_json::from_str(line)
                .map_err(|e| Error::format(name, i + 1, e.to_string()))?;
            templates.push(t);
        }
        Self::new(templates, normalizer)
    }

    pub fn builtin() -> Self {
        Self::from_jsonl(BUILTIN_TEMPLATES, "builtin", Normalizer::default())
            .expect("builtin templates are valid")
    }

    pub fn to_jsonl(&self) -> String {
        self.templates
            .iter()
            .map(|t| serde_json::to_string(t).expect("template serializes") + "\n")
            .collect()
    }

    pub fn templates(&self) -> &[Template] {
        &self.templates
    }

    pub fn get(&self, name: &str) -> Option<&Template> {
        self.templates.iter().find(|t| t.name == name)
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    pub(crate) fn trigger_sets(&self, index: usize) -> &[BTreeSet<String>] {
        &self.triggers[index]
    }
}

/// Instantiates a template and evaluates it.
pub fn run_template<T: Scalar>(
    name: &str,
    args: &[String],
    graph: &KnowledgeGraph,
    registry: &TemplateRegistry,
    ranks: &Ranks<T>,
) -> Result<ResultSet> {
    let t = registry
        .get(name)
        .ok_or_else(|| Error::NotFound(format!("template `{name}`")))?;
    let q = t.instantiate(args, graph)?;
    Ok(evaluate(graph, &q, ranks))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extraction::Entity;
    use crate::graph::{GraphBuilder, Object, Provenance, Source};

    fn graph() -> KnowledgeGraph {
        let mut b = GraphBuilder::new();
        let p = Provenance::new(Source::BugTracker, "t");
        b.add_entity(Entity::new("func:a.c#f", EntityKind::Function, "f"))
            .unwrap();
        b.insert(
            "bug:CQ/1",
            "touches",
            Object::entity("func:a.c#f"),
            p.clone(),
        )
        .unwrap();
        b.insert("commit:c1", "touches", Object::entity("func:a.c#f"), p)
            .unwrap();
        b.finalize().unwrap()
    }

    #[test]
    fn builtin_registry_loads() {
        let r = TemplateRegistry::builtin();
        for name in [
            "algo-of-function",
            "bugs-affecting-function",
            "fixes-by-developer",
            "unsynchronized-globals-of-concept",
        ] {
            assert!(r.get(name).is_some(), "{name}");
        }
        let again =
            TemplateRegistry::from_jsonl(&r.to_jsonl(), "copy", Normalizer::default()).unwrap();
        assert_eq!(again, r);
    }

    #[test]
    fn bugs_affecting_function_by_id_and_label() {
        let r = TemplateRegistry::builtin();
        let g = graph();
        let ranks = Ranks::<f64>::default();
        for arg in ["func:a.c#f", "f"] {
            let rs = run_template(
                "bugs-affecting-function",
                &[arg.to_string()],
                &g,
                &r,
                &ranks,
            )
            .unwrap();
            let ids: Vec<_> = rs.rows.iter().map(|row| row[0].text()).collect();
            assert_eq!(ids, vec!["bug:CQ/1"]);
        }
    }

    #[test]
    fn slot_errors() {
        let r = TemplateRegistry::builtin();
        let g = graph();
        let ranks = Ranks::<f64>::default();
        let err = run_template("bugs-affecting-function", &[], &g, &r, &ranks).unwrap_err();
        assert!(
            matches!(err, Error::Slot { ref slot, .. } if slot == "func"),
            "{err:?}"
        );
        let err = run_template(
            "bugs-affecting-function",
            &["bug:CQ/1".into()],
            &g,
            &r,
            &ranks,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Slot { .. }), "{err:?}");
        let err =
            run_template("bugs-fixed-on", &["12/03/2013".into()], &g, &r, &ranks).unwrap_err();
        assert!(
            matches!(err, Error::Slot { ref slot, .. } if slot == "day"),
            "{err:?}"
        );
        assert!(matches!(
            run_template("nope", &[], &g, &r, &ranks),
            Err(Error::NotFound(_))
        ));
    }

    #[test]
    fn date_holes() {
        let r = TemplateRegistry::builtin();
        let q = r
            .get("bugs-fixed-on")
            .unwrap()
            .instantiate(&["2013-03-12".into()], &KnowledgeGraph::default())
            .unwrap();
        let values: Vec<_> = q.filters.iter().map(|f| f.value.as_str()).collect();
        assert!(values.contains(&"2013-03-12T00:00:00Z"));
        assert!(values.contains(&"2013-03-13T00:00:00Z"));
    }

    #[test]
    fn invalid_templates_rejected() {
        let bad_hole =
            r#"{"name":"x","triggers":["x"],"slots":[],"body":"SELECT ?a WHERE { $f calls ?a }"}"#;
        assert!(matches!(
            TemplateRegistry::from_jsonl(bad_hole, "t", Normalizer::default()),
            Err(Error::Config(_))
        ));
        let bad_body = r#"{"name":"x","triggers":["x"],"slots":[],"body":"SELECT ?a WHERE { }"}"#;
        assert!(matches!(
            TemplateRegistry::from_jsonl(bad_body, "t", Normalizer::default()),
            Err(Error::Config(_))
        ));
    }
}
