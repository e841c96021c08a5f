use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::Deserialize;

use super::ontology::{phrase_hits, Ontology};
use crate::error::{Error, Result};
use crate::extraction::{Entity, EntityKind, FactSet, TraceEventKind, TraceLog};
use crate::graph::{Object, Predicate};
use crate::scalar::Scalar;
use crate::text::split_identifier;

pub const UNCLASSIFIED: &str = "unclassified";

const BASE_FEATURES: [&str; 3] = ["f_rec", "f_multi", "f_depth"];

/// Named numeric features of one function.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector<T> {
    pub values: BTreeMap<String, T>,
}

impl<T: Scalar> FeatureVector<T> {
    pub fn get(&self, name: &str) -> T {
        self.values.get(name).copied().unwrap_or_else(T::zero)
    }
}

/// Class x feature weight matrix and the decision threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights<T> {
    /// Class name and its feature weights, in tie-breaking order.
    pub classes: Vec<(String, BTreeMap<String, T>)>,
    pub tau: T,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightsFile {
    classes: Vec<String>,
    tau: f64,
    weights: BTreeMap<String, BTreeMap<String, f64>>,
}

/// Keywords used for a strategy class when the ontology has none for it.
pub fn default_keywords(class: &str) -> &'static [&'static str] {
    match class {
        "divide-and-conquer" => &[
            "divide",
            "conquer",
            "split",
            "merge",
            "half",
            "halves",
            "partition",
        ],
        "greedy" => &["greedy", "choose", "best", "optimal"],
        "dynamic-programming" => &["memo", "memoize", "dp", "table", "subproblem", "cache"],
        _ => &[],
    }
}

impl<T: Scalar> Default for Weights<T> {
    fn default() -> Self {
        let t = T::from_f64_lossy;
        let class = |name: &str, ws: &[(&str, f64)]| {
            (
                name.to_string(),
                ws.iter()
                    .map(|(f, w)| (f.to_string(), t(*w)))
                    .collect::<BTreeMap<_, _>>(),
            )
        };
        Weights {
            classes: vec![
                class("greedy", &[("f_kw_greedy", 0.5)]),
                class(
                    "divide-and-conquer",
                    &[
                        ("f_rec", 0.2),
                        ("f_multi", 0.2),
                        ("f_kw_divide-and-conquer", 0.5),
                        ("f_depth", 0.01),
                    ],
                ),
                class(
                    "dynamic-programming",
                    &[("f_kw_dynamic-programming", 0.5), ("f_rec", 0.1)],
                ),
            ],
            tau: t(0.5),
        }
    }
}

impl<T: Scalar> Weights<T> {
    /// Parses `{"classes":[...],"tau":..,"weights":{class:{feature:value}}}`.
    /// `unclassified` may appear in the class list but is never scored; in a
    /// class's weights `f_kw` is shorthand for `f_kw_<that class>`.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: WeightsFile =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("weights: {e}")))?;
        let names: Vec<&str> = file
            .classes
            .iter()
            .map(String::as_str)
            .filter(|c| *c != UNCLASSIFIED)
            .collect();
        if names.iter().collect::<BTreeSet<_>>().len() != names.len() {
            return Err(Error::Config("weights: duplicate class name".into()));
        }
        if let Some(c) = file.weights.keys().find(|c| !names.contains(&c.as_str())) {
            return Err(Error::Config(format!(
                "weights: class `{c}` is not in the class list"
            )));
        }
        if !file.tau.is_finite() || file.tau < 0.0 {
            return Err(Error::Config("weights: tau must be finite and >= 0".into()));
        }
        let mut classes = Vec::new();
        for name in &names {
            let mut ws = BTreeMap::new();
            for (feature, w) in file.weights.get(*name).into_iter().flatten() {
                let full = if feature == "f_kw" {
                    format!("f_kw_{name}")
                } else {
                    feature.clone()
                };
                let known = BASE_FEATURES.contains(&full.as_str())
                    || full
                        .strip_prefix("f_kw_")
                        .is_some_and(|k| names.contains(&k));
                if !known {
                    return Err(Error::Config(format!(
                        "weights: unknown feature `{feature}` in class `{name}`"
                    )));
                }
                if !w.is_finite() {
                    return Err(Error::Config(format!(
                        "weights: non-finite weight for `{feature}`"
                    )));
                }
                ws.insert(full, T::from_f64_lossy(*w));
            }
            classes.push((name.to_string(), ws));
        }
        Ok(Weights {
            classes,
            tau: T::from_f64_lossy(file.tau),
        })
    }

    pub fn class_names(&self) -> impl Iterator<Item = &str> {
        self.classes.iter().map(|(n, _)| n.as_str())
    }

    /// Multiplies every weight and the threshold by `c`.
    pub fn scaled(&self, c: T) -> Self {
        Weights {
            classes: self
                .classes
                .iter()
                .map(|(n, ws)| {
                    (
                        n.clone(),
                        ws.iter().map(|(f, w)| (f.clone(), *w * c)).collect(),
                    )
                })
                .collect(),
            tau: self.tau * c,
        }
    }
}

/// Strategy label with the per-class scores that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Label<T> {
    pub class: String,
    pub score: T,
    pub scores: Vec<(String, T)>,
}

impl<T> Label<T> {
    pub fn is_classified(&self) -> bool {
        self.class != UNCLASSIFIED
    }
}

/// Highest-scoring class; ties go to the earlier class, and a best score
/// below `tau` yields `unclassified`.
pub fn classify_strategy<T: Scalar>(features: &FeatureVector<T>, weights: &Weights<T>) -> Label<T> {
    let scores: Vec<(String, T)> = weights
        .classes
        .iter()
        .map(|(name, ws)| {
            (
                name.clone(),
                ws.iter()
                    .fold(T::zero(), |acc, (f, w)| acc + *w * features.get(f)),
            )
        })
        .collect();
    let mut best: Option<(usize, T)> = None;
    for (i, (_, s)) in scores.iter().enumerate() {
        if best.is_none_or(|(_, b)| *s > b) {
            best = Some((i, *s));
        }
    }
    match best {
        Some((i, s)) if s >= weights.tau => Label {
            class: scores[i].0.clone(),
            score: s,
            scores,
        },
        Some((_, s)) => Label {
            class: UNCLASSIFIED.to_string(),
            score: s,
            scores,
        },
        None => Label {
            class: UNCLASSIFIED.to_string(),
            score: T::zero(),
            scores,
        },
    }
}

/// Call graph, comment tokens per entity and trace recursion depth, shared
/// by feature computation over many functions.
#[derive(Debug, Clone, Default)]
pub struct FeatureContext {
    calls: BTreeMap<String, BTreeMap<String, usize>>,
    reach: BTreeMap<String, BTreeSet<String>>,
    comment_tokens: BTreeMap<String, Vec<Vec<String>>>,
    depth: BTreeMap<String, usize>,
}

impl FeatureContext {
    /// `comment_tokens` maps an entity id to the normalized tokens of each
    /// comment associated with it.
    pub fn new(
        facts: &FactSet,
        comment_tokens: BTreeMap<String, Vec<Vec<String>>>,
        trace: Option<&TraceLog>,
    ) -> Self {
        let mut calls: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
        for r in facts
            .relations
            .iter()
            .filter(|r| r.pred == Predicate::Calls)
        {
            let Object::Entity(callee) = &r.obj else {
                continue;
            };
            let sites = match (
                r.attr("sites").and_then(|s| s.parse().ok()),
                r.attr("threading"),
            ) {
                (Some(n), _) => n,
                (None, Some("create")) => continue,
                (None, _) => 1,
            };
            *calls
                .entry(r.subj.clone())
                .or_default()
                .entry(callee.clone())
                .or_default() += sites;
        }
        let reach = calls
            .keys()
            .map(|f| (f.clone(), reachable(&calls, f)))
            .collect();
        FeatureContext {
            calls,
            reach,
            comment_tokens,
            depth: trace.map(recursion_depths).unwrap_or_default(),
        }
    }

    fn in_cycle_with(&self, f: &str, g: &str) -> bool {
        self.reach.get(g).is_some_and(|r| r.contains(f))
    }
}

/// Nodes reachable from `start` by one or more call edges.
fn reachable(calls: &BTreeMap<String, BTreeMap<String, usize>>, start: &str) -> BTreeSet<String> {
    let mut seen = BTreeSet::new();
    let mut queue: VecDeque<&str> = calls
        .get(start)
        .into_iter()
        .flat_map(|m| m.keys().map(String::as_str))
        .collect();
    while let Some(n) = queue.pop_front() {
        if seen.insert(n.to_string()) {
            queue.extend(
                calls
                    .get(n)
                    .into_iter()
                    .flat_map(|m| m.keys().map(String::as_str)),
            );
        }
    }
    seen
}

/// Deepest nesting of each function on any one thread's call stack.
pub(crate) fn recursion_depths(trace: &TraceLog) -> BTreeMap<String, usize> {
    let mut stacks: BTreeMap<u64, Vec<&str>> = BTreeMap::new();
    let mut depth: BTreeMap<String, usize> = BTreeMap::new();
    for e in &trace.events {
        let stack = stacks.entry(e.tid).or_default();
        match e.kind {
            TraceEventKind::Enter => {
                stack.push(&e.target);
                let d = stack.iter().filter(|f| **f == e.target).count();
                let slot = depth.entry(e.target.clone()).or_default();
                *slot = (*slot).max(d);
            }
            TraceEventKind::Exit => {
                if let Some(pos) = stack.iter().rposition(|f| *f == e.target) {
                    stack.truncate(pos);
                }
            }
            _ => {}
        }
    }
    depth
}

/// Features of one function entity:
/// `f_rec` (1 if on a call cycle), `f_multi` (call sites into its own
/// cycle), `f_depth` (deepest self-nesting in the trace) and `f_kw_<class>`
/// (keyword hits in its comments and name, one feature per class).
pub fn compute_features<T: Scalar>(
    entity: &Entity,
    ctx: &FeatureContext,
    classes: &[String],
    ontology: &Ontology,
) -> Result<FeatureVector<T>> {
    if entity.kind != EntityKind::Function {
        return Err(Error::Domain(format!(
            "`{}` is a {}, not a function",
            entity.id, entity.kind
        )));
    }
    let f = entity.id.as_str();
    let mut values = BTreeMap::new();
    let rec = ctx.in_cycle_with(f, f);
    values.insert("f_rec".to_string(), if rec { T::one() } else { T::zero() });
    let cyclic_sites: usize = ctx
        .calls
        .get(f)
        .map(|m| {
            m.iter()
                .filter(|(g, _)| ctx.in_cycle_with(f, g))
                .map(|(_, n)| *n)
                .sum()
        })
        .unwrap_or(0);
    values.insert("f_multi".to_string(), T::from_count(cyclic_sites));
    values.insert(
        "f_depth".to_string(),
        T::from_count(ctx.depth.get(f).copied().unwrap_or(0)),
    );

    let mut texts: Vec<Vec<String>> = ctx.comment_tokens.get(f).cloned().unwrap_or_default();
    texts.push(split_identifier(&entity.label));
    for class in classes.iter().filter(|c| *c != UNCLASSIFIED) {
        let phrases = ontology.keywords_for(class);
        let hits: usize = texts.iter().map(|toks| phrase_hits(toks, &phrases)).sum();
        values.insert(format!("f_kw_{class}"), T::from_count(hits));
    }
    Ok(FeatureVector { values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extraction::parse_source;
    use crate::text::Normalizer;

    fn fv(pairs: &[(&str, f64)]) -> FeatureVector<f64> {
        FeatureVector {
            values: pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    fn classes() -> Vec<String> {
        Weights::<f64>::default()
            .class_names()
            .map(str::to_string)
            .collect()
    }

    #[test]
    fn self_calling_twice_with_divide_comment() {
        let src = "void merge(int *a, int n) { }\nvoid msort(int *a, int n) {\n if (n < 2) return;\n msort(a, n/2);\n msort(a + n/2, n - n/2);\n merge(a, n);\n}\n";
        let facts = parse_source(src, "m.c");
        let norm = Normalizer::default();
        let mut toks = BTreeMap::new();
        toks.insert(
            "func:m.c#msort".to_string(),
            vec![norm.tokens("divide the range")],
        );
        let ctx = FeatureContext::new(&facts, toks, None);
        let onto = Ontology::default();
        let f: FeatureVector<f64> = compute_features(
            facts.entity("func:m.c#msort").unwrap(),
            &ctx,
            &classes(),
            &onto,
        )
        .unwrap();
        assert_eq!(f.get("f_rec"), 1.0);
        assert_eq!(f.get("f_multi"), 2.0);
        assert_eq!(f.get("f_depth"), 0.0);
        assert_eq!(f.get("f_kw_divide-and-conquer"), 1.0);
        // 0.2*1 + 0.2*2 + 0.5*1 = 1.1; every other class scores 0.1 at most.
        let label = classify_strategy(&f, &Weights::default());
        assert_eq!(label.class, "divide-and-conquer");
        assert!((label.score - 1.1).abs() < 1e-12);
    }

    #[test]
    fn leaf_function_has_zero_features() {
        let facts = parse_source("int leaf(int x) { return x + 1; }\n", "a.c");
        let ctx = FeatureContext::new(&facts, BTreeMap::new(), None);
        let f: FeatureVector<f64> = compute_features(
            facts.entity("func:a.c#leaf").unwrap(),
            &ctx,
            &classes(),
            &Ontology::default(),
        )
        .unwrap();
        assert!(f.values.values().all(|v| *v == 0.0), "{f:?}");
        assert_eq!(
            classify_strategy(&f, &Weights::default()).class,
            UNCLASSIFIED
        );
    }

    #[test]
    fn non_function_is_domain_error() {
        let facts = parse_source("int g;\n", "a.c");
        let ctx = FeatureContext::new(&facts, BTreeMap::new(), None);
        let err = compute_features::<f64>(
            facts.entity("var:a.c#g").unwrap(),
            &ctx,
            &classes(),
            &Ontology::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn spec_default_weight_example() {
        let label = classify_strategy(
            &fv(&[("f_rec", 1.0), ("f_multi", 2.0)]),
            &Weights::default(),
        );
        assert_eq!(label.class, "divide-and-conquer");
    }

    #[test]
    fn below_threshold_is_unclassified_and_ties_go_first() {
        let w = Weights::<f64>::default();
        assert_eq!(classify_strategy(&fv(&[]), &w).class, UNCLASSIFIED);
        let tie = fv(&[("f_kw_greedy", 1.0), ("f_kw_dynamic-programming", 1.0)]);
        assert_eq!(classify_strategy(&tie, &w).class, "greedy");
    }

    #[test]
    fn weights_file_validation() {
        let ok = r#"{"classes":["greedy","divide-and-conquer","unclassified"],"tau":0.5,"weights":{"greedy":{"f_kw":1.0},"divide-and-conquer":{"f_rec":0.5,"f_kw_greedy":0.1}}}"#;
        let w = Weights::<f64>::from_json(ok).unwrap();
        assert_eq!(w.classes.len(), 2);
        assert_eq!(w.classes[0].1.get("f_kw_greedy"), Some(&1.0));
        let bad = r#"{"classes":["greedy"],"tau":0.5,"weights":{"greedy":{"f_speed":1.0}}}"#;
        assert!(matches!(
            Weights::<f64>::from_json(bad),
            Err(Error::Config(_))
        ));
        let stray = r#"{"classes":["greedy"],"tau":0.5,"weights":{"dp":{"f_rec":1.0}}}"#;
        assert!(matches!(
            Weights::<f64>::from_json(stray),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn nested_enter_gives_depth_two() {
        let trace = crate::extraction::load_trace(
            "{\"seq\":1,\"tid\":1,\"kind\":\"enter\",\"target\":\"func:a.c#f\"}\n{\"seq\":2,\"tid\":1,\"kind\":\"enter\",\"target\":\"func:a.c#f\"}\n{\"seq\":3,\"tid\":1,\"kind\":\"exit\",\"target\":\"func:a.c#f\"}\n{\"seq\":4,\"tid\":1,\"kind\":\"exit\",\"target\":\"func:a.c#f\"}\n",
            "t",
        )
        .unwrap();
        assert_eq!(recursion_depths(&trace)["func:a.c#f"], 2);
    }
}
