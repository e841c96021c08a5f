//! Flat-file persistence: `nodes.jsonl` (one entity per line, sorted by id)
//! and `triples.tsv` (`subject\tpredicate\tobject\tprovenance-json`, sorted).
//! Literal objects are written as JSON strings, so they always start with `"`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GraphBuilder, KnowledgeGraph, Object, Predicate, Provenance, Triple};
use crate::error::{Error, Result};
use crate::extraction::{Entity, EntityKind, Span};

pub const NODES_FILE: &str = "nodes.jsonl";
pub const TRIPLES_FILE: &str = "triples.tsv";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeRecord {
    id: String,
    kind: EntityKind,
    label: String,
    path: Option<String>,
    start: Option<usize>,
    end: Option<usize>,
    attrs: BTreeMap<String, String>,
}

pub fn render_nodes(graph: &KnowledgeGraph) -> String {
    let mut out = String::new();
    for e in graph.entities() {
        let rec = NodeRecord {
            id: e.id.clone(),
            kind: e.kind,
            label: e.label.clone(),
            path: e.span.as_ref().map(|s| s.path.clone()),
            start: e.span.as_ref().map(|s| s.start),
            end: e.span.as_ref().map(|s| s.end),
            attrs: e.attrs.clone(),
        };
        out.push_str(&serde_json::to_string(&rec).expect("node records serialize"));
        out.push('\n');
    }
    out
}

pub fn render_triples(graph: &KnowledgeGraph) -> String {
    let mut lines: Vec<String> = graph
        .triples()
        .map(|t| {
            let prov = serde_json::to_string(t.provenance).expect("provenance serializes");
            format!("{}\t{}\t{}\t{}", t.subject, t.predicate, t.object, prov)
        })
        .collect();
    lines.sort();
    let mut out = lines.join("\n");
    if !out.is_empty() {
        out.push('\n');
    }
    out
}

pub fn save(graph: &KnowledgeGraph, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let nodes = dir.join(NODES_FILE);
    fs::write(&nodes, render_nodes(graph)).map_err(|e| Error::io(&nodes, e))?;
    let triples = dir.join(TRIPLES_FILE);
    fs::write(&triples, render_triples(graph)).map_err(|e| Error::io(&triples, e))?;
    Ok(())
}

pub fn load(dir: &Path) -> Result<KnowledgeGraph> {
    let nodes_path = dir.join(NODES_FILE);
    let triples_path = dir.join(TRIPLES_FILE);
    let nodes = fs::read_to_string(&nodes_path).map_err(|e| Error::io(&nodes_path, e))?;
    let triples = fs::read_to_string(&triples_path).map_err(|e| Error::io(&triples_path, e))?;
    parse(&nodes, &triples)
}

/// Rebuilds a graph from the two persisted documents.
pub fn parse(nodes: &str, triples: &str) -> Result<KnowledgeGraph> {
    let mut b = GraphBuilder::new();
    for (i, line) in nodes.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let rec: NodeRecord = serde_json::from_str(line)
            .map_err(|e| Error::format(NODES_FILE, i + 1, e.to_string()))?;
        let span = match (rec.path, rec.start, rec.end) {
            (Some(p), Some(s), Some(e)) if s <= e => Some(Span::new(p, s, e)),
            (None, None, None) => None,
            _ => {
                return Err(Error::format(
                    NODES_FILE,
                    i + 1,
                    "incomplete or inverted span",
                ))
            }
        };
        let entity = Entity {
            id: rec.id,
            kind: rec.kind,
            label: rec.label,
            span,
            attrs: rec.attrs,
        };
        b.add_entity(entity)
            .map_err(|e| Error::format(NODES_FILE, i + 1, e.to_string()))?;
    }
    for (i, line) in triples.lines().enumerate() {
        let lineno = i + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let [s, p, o, prov] = fields[..] else {
            return Err(Error::format(
                TRIPLES_FILE,
                lineno,
                format!("expected 4 tab-separated fields, found {}", fields.len()),
            ));
        };
        let bad = |m: String| Error::format(TRIPLES_FILE, lineno, m);
        let predicate: Predicate = p.parse().map_err(|e: Error| bad(e.to_string()))?;
        let object = if o.starts_with('"') {
            Object::Literal(serde_json::from_str(o).map_err(|e| bad(e.to_string()))?)
        } else {
            Object::Entity(o.to_string())
        };
        let provenance: Vec<Provenance> =
            serde_json::from_str(prov).map_err(|e| bad(e.to_string()))?;
        if provenance.is_empty() {
            return Err(bad("empty provenance list".into()));
        }
        for pr in provenance {
            b.insert_triple(Triple::new(s, predicate, object.clone(), pr))
                .map_err(|e| bad(e.to_string()))?;
        }
    }
    b.finalize()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Source;

    #[test]
    fn empty_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = GraphBuilder::new().finalize().unwrap();
        save(&g, dir.path()).unwrap();
        assert_eq!(load(dir.path()).unwrap(), g);
    }

    #[test]
    fn literal_and_provenance_round_trip() {
        let mut b = GraphBuilder::new();
        let p = Provenance::new(Source::SourceCode, "a.c:3")
            .tagged("x")
            .with_attr("k", "v\tw");
        b.insert_triple(Triple::new(
            "var:a.c#g",
            Predicate::HasType,
            Object::literal("unsigned \"long\" int"),
            p.clone(),
        ))
        .unwrap();
        b.insert_triple(Triple::new(
            "var:a.c#g",
            Predicate::HasType,
            Object::literal("unsigned \"long\" int"),
            p,
        ))
        .unwrap();
        let g = b.finalize().unwrap();
        let back = parse(&render_nodes(&g), &render_triples(&g)).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn three_field_line_rejected() {
        let err = parse("", "func:a#f\tcalls\tfunc:a#g\n").unwrap_err();
        assert!(matches!(err, Error::Format { line: 1, .. }));
        let err = parse(
            "",
            "func:a#f\tcalls\tfunc:a#g\t[{\"source\":\"trace\",\"origin\":\"t\"}]\nx\ty\n",
        )
        .unwrap_err();
        assert!(matches!(err, Error::Format { line: 2, .. }));
    }
}
