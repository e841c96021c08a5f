use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::{AlertKind, Evidence, SmartAlert, RACE_SCORE};
use crate::concepts::lockset_analysis;
use crate::error::{Error, Result};
use crate::extraction::{EntityKind, TraceLog};
use crate::graph::{KnowledgeGraph, Object, Predicate, TripleKey, TriplePattern};

/// Thread entry points (`starts-thread` objects) plus functions named `main`.
pub fn thread_roots(graph: &KnowledgeGraph) -> BTreeSet<String> {
    let mut roots: BTreeSet<String> = graph
        .matching(TriplePattern::new(
            None,
            Some(Predicate::StartsThread),
            None,
        ))
        .filter_map(|t| t.object.as_entity().map(str::to_string))
        .collect();
    roots.extend(
        graph
            .entities()
            .filter(|e| e.kind == EntityKind::Function && e.label == "main")
            .map(|e| e.id.clone()),
    );
    roots
}

/// A `calls` edge asserted only by thread-create sites (no direct call
/// `sites`) runs the callee on a new thread, not on the caller's.
fn spawn_only(graph: &KnowledgeGraph, f: &str, g: &str) -> bool {
    let key = TripleKey {
        subject: f.to_string(),
        predicate: Predicate::Calls,
        object: Object::entity(g),
    };
    graph.provenance(&key).is_some_and(|ps| {
        ps.iter().all(|p| {
            p.attrs.get("threading").is_some_and(|t| t == "create")
                && !p.attrs.contains_key("sites")
        })
    })
}

/// BFS over `calls` from `root`, skipping spawn-only edges; maps each
/// reached function to its parent.
fn call_tree<'g>(graph: &'g KnowledgeGraph, root: &'g str) -> BTreeMap<&'g str, Option<&'g str>> {
    let mut parent: BTreeMap<&str, Option<&str>> = BTreeMap::new();
    parent.insert(root, None);
    let mut queue = VecDeque::from([root]);
    while let Some(f) = queue.pop_front() {
        for g in graph.outgoing(f, Predicate::Calls) {
            if !parent.contains_key(g) && !spawn_only(graph, f, g) {
                parent.insert(g, Some(f));
                queue.push_back(g);
            }
        }
    }
    parent
}

fn path_evidence(tree: &BTreeMap<&str, Option<&str>>, target: &str) -> Vec<Evidence> {
    let mut path = Vec::new();
    let mut cur = target;
    while let Some(Some(p)) = tree.get(cur) {
        path.push(Evidence::Triple {
            subject: p.to_string(),
            predicate: Predicate::Calls,
            object: Object::entity(cur),
        });
        cur = p;
    }
    path.reverse();
    path
}

fn push_unique(v: &mut Vec<Evidence>, e: Evidence) {
    if !v.contains(&e) {
        v.push(e);
    }
}

/// Static race rule: some function reads or writes the global without a
/// `guards` triple and is reachable through `calls` from two or more roots.
pub fn race_alert_static(graph: &KnowledgeGraph, var: &str) -> Result<Option<SmartAlert>> {
    let e = graph
        .entity(var)
        .ok_or_else(|| Error::NotFound(var.to_string()))?;
    if e.kind != EntityKind::Variable || e.attr("scope") != Some("global") {
        return Err(Error::Domain(format!("`{var}` is not a global variable")));
    }
    let target = Object::entity(var);
    let mut accesses: BTreeMap<&str, Vec<Predicate>> = BTreeMap::new();
    for pred in [Predicate::Writes, Predicate::Reads] {
        for t in graph.matching(TriplePattern::new(None, Some(pred), Some(&target))) {
            if !graph.contains(t.subject, Predicate::Guards, &target) {
                accesses.entry(t.subject).or_default().push(pred);
            }
        }
    }
    if accesses.is_empty() {
        return Ok(None);
    }
    let roots = thread_roots(graph);
    let trees: Vec<(&str, BTreeMap<&str, Option<&str>>)> = roots
        .iter()
        .map(|r| (r.as_str(), call_tree(graph, r)))
        .collect();

    let mut evidence = Vec::new();
    let mut offenders = Vec::new();
    let mut all_roots: BTreeSet<&str> = BTreeSet::new();
    for (f, preds) in &accesses {
        let reaching: Vec<&(&str, BTreeMap<&str, Option<&str>>)> =
            trees.iter().filter(|(_, t)| t.contains_key(f)).collect();
        if reaching.len() < 2 {
            continue;
        }
        offenders.push(*f);
        for (root, tree) in reaching {
            all_roots.insert(root);
            for st in graph.incoming(root, Predicate::StartsThread) {
                push_unique(
                    &mut evidence,
                    Evidence::Triple {
                        subject: st.to_string(),
                        predicate: Predicate::StartsThread,
                        object: Object::entity(*root),
                    },
                );
            }
            for ev in path_evidence(tree, f) {
                push_unique(&mut evidence, ev);
            }
        }
        for p in preds {
            push_unique(
                &mut evidence,
                Evidence::Triple {
                    subject: f.to_string(),
                    predicate: *p,
                    object: target.clone(),
                },
            );
        }
    }
    if offenders.is_empty() {
        return Ok(None);
    }
    let name = |id: &str| {
        graph
            .entity(id)
            .map_or_else(|| crate::ids::label_of(id), |e| e.label.clone())
    };
    Ok(Some(SmartAlert {
        kind: AlertKind::RaceStatic,
        subject: var.to_string(),
        message: format!(
            "global `{}` is accessed without a lock in {}, reachable from {}",
            e.label,
            offenders
                .iter()
                .map(|f| name(f))
                .collect::<Vec<_>>()
                .join(", "),
            all_roots
                .iter()
                .map(|r| name(r))
                .collect::<Vec<_>>()
                .join(", "),
        ),
        evidence,
        score: RACE_SCORE,
    }))
}

/// Lockset rule: the candidate lockset emptied, at least two threads touched
/// the variable and at least one access was a write.
pub fn race_alert_dynamic(trace: &TraceLog, var: &str) -> Result<Option<SmartAlert>> {
    let analysis = lockset_analysis(trace);
    let st = analysis
        .get(var)
        .ok_or_else(|| Error::NotFound(format!("`{var}` is not accessed in the trace")))?;
    if !st.is_race() {
        return Ok(None);
    }
    let tids: Vec<String> = st.tids.iter().map(u64::to_string).collect();
    Ok(Some(SmartAlert {
        kind: AlertKind::RaceDynamic,
        subject: var.to_string(),
        evidence: st
            .violations
            .iter()
            .map(|&seq| Evidence::Event { seq })
            .collect(),
        message: format!(
            "threads {} access `{}` with no common lock",
            tids.join(", "),
            crate::ids::label_of(var)
        ),
        score: RACE_SCORE,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extraction::{load_trace, Entity};
    use crate::graph::{GraphBuilder, Provenance, Source};

    fn graph(guard_worker: bool, worker_root: bool) -> KnowledgeGraph {
        let mut b = GraphBuilder::new();
        let p = || Provenance::new(Source::SourceCode, "t");
        b.add_entity(Entity::new("func:a.c#main", EntityKind::Function, "main"))
            .unwrap();
        b.add_entity(Entity::new(
            "func:a.c#worker",
            EntityKind::Function,
            "worker",
        ))
        .unwrap();
        b.add_entity(
            Entity::new("var:a.c#g", EntityKind::Variable, "g").with_attr("scope", "global"),
        )
        .unwrap();
        b.add_entity(Entity::new("var:a.c#l", EntityKind::Variable, "l"))
            .unwrap();
        b.insert("func:a.c#main", "writes", Object::entity("var:a.c#g"), p())
            .unwrap();
        b.insert(
            "func:a.c#worker",
            "writes",
            Object::entity("var:a.c#g"),
            p(),
        )
        .unwrap();
        if worker_root {
            b.insert(
                "thread:a.c#worker",
                "starts-thread",
                Object::entity("func:a.c#worker"),
                p(),
            )
            .unwrap();
        }
        if guard_worker {
            b.insert(
                "func:a.c#worker",
                "guards",
                Object::entity("var:a.c#g"),
                p(),
            )
            .unwrap();
            b.insert("func:a.c#main", "guards", Object::entity("var:a.c#g"), p())
                .unwrap();
        }
        b.insert(
            "func:a.c#main",
            "calls",
            Object::entity("func:a.c#worker"),
            p(),
        )
        .unwrap();
        b.finalize().unwrap()
    }

    #[test]
    fn unguarded_write_from_two_roots() {
        let a = race_alert_static(&graph(false, true), "var:a.c#g")
            .unwrap()
            .unwrap();
        assert_eq!(a.kind, AlertKind::RaceStatic);
        assert!(a.evidence.contains(&Evidence::Triple {
            subject: "func:a.c#main".into(),
            predicate: Predicate::Calls,
            object: Object::entity("func:a.c#worker")
        }));
        assert!(a.message.contains("worker"));
    }

    #[test]
    fn guards_and_single_root_suppress() {
        assert!(race_alert_static(&graph(true, true), "var:a.c#g")
            .unwrap()
            .is_none());
        assert!(race_alert_static(&graph(false, false), "var:a.c#g")
            .unwrap()
            .is_none());
        assert!(matches!(
            race_alert_static(&graph(false, true), "var:a.c#l"),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            race_alert_static(&graph(false, true), "var:a.c#zz"),
            Err(Error::NotFound(_))
        ));
    }

    #[test]
    fn dynamic_rule() {
        let t = load_trace(
            "{\"seq\":1,\"tid\":1,\"kind\":\"acquire\",\"target\":\"L\"}\n\
             {\"seq\":2,\"tid\":1,\"kind\":\"write\",\"target\":\"var:a.c#g\"}\n\
             {\"seq\":3,\"tid\":1,\"kind\":\"release\",\"target\":\"L\"}\n\
             {\"seq\":4,\"tid\":2,\"kind\":\"write\",\"target\":\"var:a.c#g\"}\n",
            "t",
        )
        .unwrap();
        let a = race_alert_dynamic(&t, "var:a.c#g").unwrap().unwrap();
        assert_eq!(a.evidence, vec![Evidence::Event { seq: 4 }]);
        assert!(matches!(
            race_alert_dynamic(&t, "var:a.c#h"),
            Err(Error::NotFound(_))
        ));
    }
}
