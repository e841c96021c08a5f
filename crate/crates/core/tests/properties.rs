use std::collections::{BTreeMap, BTreeSet, VecDeque};

use ckt_core::concepts::{
    classify_strategy, lockset_analysis, tag_domain_concepts, validate_comment, FeatureVector,
    Ontology, OntologyEntry, Weights,
};
use ckt_core::extraction::{
    extract_comments, Entity, EntityKind, TraceEvent, TraceEventKind, TraceLog,
};
use ckt_core::graph::{
    GraphBuilder, KnowledgeGraph, Object, Predicate, Provenance, Source, Triple,
};
use ckt_core::smart::{race_alert_static, similar_defects, similarity, Evidence};
use ckt_core::text::Normalizer;
use proptest::prelude::*;

fn prov() -> Provenance {
    Provenance::new(Source::SourceCode, "t:1")
}

const VAR: &str = "var:r.c#g";

fn func(i: usize) -> String {
    if i == 0 {
        "func:r.c#main".to_string()
    } else {
        format!("func:r.c#f{i}")
    }
}

#[derive(Debug, Clone)]
struct RaceCase {
    n: usize,
    calls: Vec<(usize, usize)>,
    spawned: Vec<usize>,
    access: Vec<(usize, bool)>,
    guarded: Vec<usize>,
}

fn race_case() -> impl Strategy<Value = RaceCase> {
    (2usize..8).prop_flat_map(|n| {
        (
            Just(n),
            prop::collection::vec((0..n, 0..n), 0..14),
            prop::collection::vec(1..n, 0..3),
            prop::collection::vec((0..n, any::<bool>()), 1..5),
            prop::collection::vec(0..n, 0..2),
        )
            .prop_map(|(n, calls, spawned, access, guarded)| RaceCase {
                n,
                calls,
                spawned,
                access,
                guarded,
            })
    })
}

fn race_graph(c: &RaceCase) -> KnowledgeGraph {
    let mut b = GraphBuilder::new();
    for i in 0..c.n {
        let id = func(i);
        let label = id.rsplit('#').next().unwrap().to_string();
        b.add_entity(Entity::new(id, EntityKind::Function, label))
            .unwrap();
    }
    b.add_entity(Entity::new(VAR, EntityKind::Variable, "g").with_attr("scope", "global"))
        .unwrap();
    for (s, o) in &c.calls {
        b.insert_triple(Triple::new(
            func(*s),
            Predicate::Calls,
            Object::entity(func(*o)),
            prov(),
        ))
        .unwrap();
    }
    for f in &c.spawned {
        let root = format!("thread:r.c#f{f}");
        b.insert_triple(Triple::new(
            root,
            Predicate::StartsThread,
            Object::entity(func(*f)),
            prov(),
        ))
        .unwrap();
    }
    for (f, write) in &c.access {
        let p = if *write {
            Predicate::Writes
        } else {
            Predicate::Reads
        };
        b.insert_triple(Triple::new(func(*f), p, Object::entity(VAR), prov()))
            .unwrap();
    }
    for f in &c.guarded {
        b.insert_triple(Triple::new(
            func(*f),
            Predicate::Guards,
            Object::entity(VAR),
            prov(),
        ))
        .unwrap();
    }
    b.finalize().unwrap()
}

/// Reachability oracle: BFS over the adjacency list from every root.
fn race_oracle(c: &RaceCase) -> bool {
    let mut adj = vec![Vec::new(); c.n];
    for (s, o) in &c.calls {
        adj[*s].push(*o);
    }
    let roots: BTreeSet<usize> = std::iter::once(0)
        .chain(c.spawned.iter().copied())
        .collect();
    let mut hits = vec![0usize; c.n];
    for &r in &roots {
        let mut seen = vec![false; c.n];
        seen[r] = true;
        let mut q = VecDeque::from([r]);
        while let Some(u) = q.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    q.push_back(v);
                }
            }
        }
        for (i, s) in seen.iter().enumerate() {
            hits[i] += usize::from(*s);
        }
    }
    c.access
        .iter()
        .any(|(f, _)| !c.guarded.contains(f) && hits[*f] >= 2)
}

proptest! {
    #[test]
    fn static_race_matches_reachability_oracle(c in race_case()) {
        let g = race_graph(&c);
        let alert = race_alert_static(&g, VAR).unwrap();
        prop_assert_eq!(alert.is_some(), race_oracle(&c));
        if let Some(a) = alert {
            prop_assert!(!a.evidence.is_empty());
            for e in &a.evidence {
                if let Evidence::Triple { subject, predicate, object } = e {
                    prop_assert!(g.contains(subject, *predicate, object), "evidence {} not in graph", e);
                }
            }
        }
    }

    #[test]
    fn static_race_is_monotone_in_call_edges(c in race_case(), extra in (0usize..8, 0usize..8)) {
        let before = race_alert_static(&race_graph(&c), VAR).unwrap().is_some();
        let mut more = c.clone();
        more.calls.push((extra.0 % c.n, extra.1 % c.n));
        let after = race_alert_static(&race_graph(&more), VAR).unwrap().is_some();
        prop_assert!(!before || after);
    }

    #[test]
    fn guarding_every_accessor_silences_the_static_rule(c in race_case()) {
        let mut all = c.clone();
        all.guarded = c.access.iter().map(|(f, _)| *f).collect();
        prop_assert!(race_alert_static(&race_graph(&all), VAR).unwrap().is_none());
    }
}

fn trace_strategy() -> impl Strategy<Value = Vec<(u64, u8, u8)>> {
    prop::collection::vec((1u64..4, 0u8..4, 0u8..3), 1..80)
}

fn to_trace(rows: &[(u64, u8, u8)]) -> TraceLog {
    let events = rows
        .iter()
        .enumerate()
        .map(|(i, (tid, kind, t))| {
            let (kind, target) = match kind {
                0 => (TraceEventKind::Read, format!("var:t.c#v{t}")),
                1 => (TraceEventKind::Write, format!("var:t.c#v{t}")),
                2 => (TraceEventKind::Acquire, format!("L{t}")),
                _ => (TraceEventKind::Release, format!("L{t}")),
            };
            TraceEvent {
                seq: i as u64 + 1,
                tid: *tid,
                kind,
                target,
            }
        })
        .collect();
    TraceLog::from_events(events)
}

proptest! {
    #[test]
    fn lockset_of_a_prefix_is_a_prefix_of_the_lockset(rows in trace_strategy(), cut in any::<prop::sample::Index>()) {
        let full = to_trace(&rows);
        let k = cut.index(rows.len()) + 1;
        let prefix = to_trace(&rows[..k]);
        let a = lockset_analysis(&full);
        let p = lockset_analysis(&prefix);
        let last = k as u64;
        for (var, st) in &p {
            let f = &a[var];
            let keep = |v: &[u64]| v.iter().copied().filter(|s| *s <= last).collect::<Vec<_>>();
            prop_assert_eq!(&keep(&f.accesses), &st.accesses);
            prop_assert_eq!(&keep(&f.violations), &st.violations);
            // Candidate sets only shrink as the trace grows.
            let (Some(fc), Some(pc)) = (&f.candidates, &st.candidates) else { unreachable!() };
            prop_assert!(fc.is_subset(pc));
        }
    }
}

fn exact_weights() -> impl Strategy<Value = Weights<f64>> {
    // Quarter-step weights and small integer features keep every product and
    // sum exact, so scaling can be compared bit for bit.
    let w = (0i32..12).prop_map(|q| f64::from(q) * 0.25);
    (
        prop::collection::vec(prop::collection::vec(w, 3), 1..4),
        0i32..12,
    )
        .prop_map(|(classes, tau)| Weights {
            classes: classes
                .into_iter()
                .enumerate()
                .map(|(i, ws)| {
                    let names = ["f_rec", "f_multi", "f_depth"];
                    (
                        format!("c{i}"),
                        names.iter().map(|n| n.to_string()).zip(ws).collect(),
                    )
                })
                .collect(),
            tau: f64::from(tau) * 0.25,
        })
}

proptest! {
    #[test]
    fn classification_is_invariant_under_positive_scaling(
        weights in exact_weights(),
        feats in prop::collection::vec(0u8..6, 3),
        c in prop::sample::select(vec![0.5f64, 2.0, 3.0, 10.0]),
    ) {
        let fv = FeatureVector {
            values: ["f_rec", "f_multi", "f_depth"].iter().map(|n| n.to_string()).zip(feats.iter().map(|x| f64::from(*x))).collect(),
        };
        let base = classify_strategy(&fv, &weights);
        let scaled = classify_strategy(&fv, &weights.scaled(c));
        prop_assert_eq!(base.class, scaled.class);
    }
}

const WORDS: [&str; 10] = [
    "save",
    "button",
    "edge",
    "detection",
    "rising",
    "ui",
    "buffer",
    "flush",
    "widget",
    "timer",
];

fn onto() -> Ontology {
    let entry = |term: &str, syn: &[&str], concept: &str| OntologyEntry {
        term: term.to_string(),
        synonyms: syn.iter().map(|s| s.to_string()).collect(),
        concept: Some(concept.to_string()),
    };
    Ontology::new(
        vec![
            entry("save button", &["ui save"], "save-button"),
            entry("edge detection", &["rising edge"], "edge-detection"),
            entry("flush", &[], "flush"),
        ],
        &Normalizer::default(),
    )
}

fn concepts_of(words: &[&str]) -> BTreeSet<String> {
    let norm = Normalizer::default();
    let src = format!("// {}\nvoid f(void) {{}}\n", words.join(" "));
    let comments = extract_comments(&src, "a.c", &norm);
    tag_domain_concepts(&comments[0], "func:a.c#f", &onto())
        .into_iter()
        .map(|t| t.object.text().to_string())
        .collect()
}

proptest! {
    #[test]
    fn appending_words_never_loses_concepts(
        a in prop::collection::vec(prop::sample::select(WORDS.to_vec()), 1..8),
        b in prop::collection::vec(prop::sample::select(WORDS.to_vec()), 0..8),
    ) {
        let small = concepts_of(&a);
        let both: Vec<&str> = a.iter().chain(&b).copied().collect();
        prop_assert!(small.is_subset(&concepts_of(&both)));
    }

    #[test]
    fn identifiers_in_scope_are_never_reported(
        words in prop::collection::vec("[a-z]{1,6}(_[a-z]{1,4})?|[a-z]+[A-Z][a-z]+", 1..10),
        in_scope in prop::collection::vec(any::<bool>(), 10),
        declared in prop::collection::vec(any::<bool>(), 10),
    ) {
        let scope: BTreeSet<String> =
            words.iter().zip(&in_scope).filter(|(_, k)| **k).map(|(w, _)| w.clone()).collect();
        let decl: BTreeSet<String> =
            words.iter().zip(&declared).filter(|(_, k)| **k).map(|(w, _)| w.clone()).collect();
        let text = words.join(" ");
        let v = validate_comment("comment:a.c#L1", &text, "func:a.c#f", &scope, &decl);
        for m in &v.missing {
            prop_assert!(!scope.contains(m), "{} is in scope", m);
        }
        prop_assert_eq!(v.is_stale(), !v.missing.is_empty());
    }
}

const BUG_WORDS: [&str; 8] = [
    "crash", "parser", "overflow", "unsigned", "widget", "timer", "posedge", "signal",
];

fn bug_graph(bugs: &[(Vec<&str>, Vec<usize>)]) -> KnowledgeGraph {
    let mut b = GraphBuilder::new();
    for (i, (title, funcs)) in bugs.iter().enumerate() {
        let id = format!("bug:T/{i}");
        b.add_entity(
            Entity::new(id.clone(), EntityKind::Bug, format!("T#{i}"))
                .with_attr("title", title.join(" ")),
        )
        .unwrap();
        for f in funcs {
            b.insert_triple(Triple::new(
                id.clone(),
                Predicate::Touches,
                Object::entity(format!("func:b.c#f{f}")),
                prov(),
            ))
            .unwrap();
        }
    }
    b.finalize().unwrap()
}

fn bug_set() -> impl Strategy<Value = Vec<(Vec<&'static str>, Vec<usize>)>> {
    prop::collection::vec(
        (
            prop::collection::vec(prop::sample::select(BUG_WORDS.to_vec()), 0..5),
            prop::collection::vec(0usize..6, 0..2),
        ),
        2..7,
    )
}

/// All-pairs scoring written from the definition: word-set Jaccard, or 1.0
/// when the two bugs touch a common function.
fn oracle_score(a: &(Vec<&str>, Vec<usize>), b: &(Vec<&str>, Vec<usize>)) -> f64 {
    if a.1.iter().any(|f| b.1.contains(f)) {
        return 1.0;
    }
    let x: BTreeSet<&str> = a.0.iter().copied().collect();
    let y: BTreeSet<&str> = b.0.iter().copied().collect();
    let union = x.union(&y).count();
    if union == 0 {
        0.0
    } else {
        x.intersection(&y).count() as f64 / union as f64
    }
}

proptest! {
    #[test]
    fn similarity_is_symmetric(bugs in bug_set()) {
        let g = bug_graph(&bugs);
        let norm = Normalizer::default();
        for i in 0..bugs.len() {
            for j in 0..bugs.len() {
                let (a, b) = (format!("bug:T/{i}"), format!("bug:T/{j}"));
                prop_assert_eq!(similarity(&g, &a, &b, &norm).unwrap(), similarity(&g, &b, &a, &norm).unwrap());
            }
        }
    }

    #[test]
    fn similar_defects_match_all_pairs_ranking(bugs in bug_set(), k in 1usize..5) {
        let g = bug_graph(&bugs);
        let norm = Normalizer::default();
        for i in 0..bugs.len() {
            let mut want: Vec<(String, f64)> = (0..bugs.len())
                .filter(|j| *j != i)
                .map(|j| (format!("bug:T/{j}"), oracle_score(&bugs[i], &bugs[j])))
                .filter(|(_, s)| *s >= 0.25)
                .collect();
            want.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
            want.truncate(k);
            let got = similar_defects(&g, &format!("bug:T/{i}"), k, 0.25, &norm).unwrap();
            prop_assert_eq!(got.len(), want.len());
            for ((gi, gs), (wi, ws)) in got.iter().zip(&want) {
                prop_assert_eq!(gi, wi);
                prop_assert!((gs - ws).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn scaled_weights_keep_a_tie_break() {
    let w: Weights<f64> = Weights {
        classes: vec![
            ("first".into(), BTreeMap::from([("f_rec".to_string(), 1.0)])),
            (
                "second".into(),
                BTreeMap::from([("f_rec".to_string(), 1.0)]),
            ),
        ],
        tau: 0.5,
    };
    let fv = FeatureVector {
        values: BTreeMap::from([("f_rec".to_string(), 1.0)]),
    };
    assert_eq!(classify_strategy(&fv, &w).class, "first");
    assert_eq!(classify_strategy(&fv, &w.scaled(7.0)).class, "first");
}

#[test]
fn shared_callee_of_main_and_a_worker_races() {
    let c = RaceCase {
        n: 3,
        calls: vec![(0, 2), (1, 2)],
        spawned: vec![1],
        access: vec![(2, true)],
        guarded: vec![],
    };
    assert!(race_oracle(&c));
    let alert = race_alert_static(&race_graph(&c), VAR)
        .unwrap()
        .expect("alert");
    assert!(alert.evidence.contains(&Evidence::Triple {
        subject: func(1),
        predicate: Predicate::Calls,
        object: Object::entity(func(2)),
    }));
}
