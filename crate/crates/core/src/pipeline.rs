//! End-to-end build: manifest -> extraction -> linking -> concepts -> graph
//! -> analytics -> persisted output directory, plus loading a built
//! directory back for querying.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::concepts::{
    classify_strategy, compute_features, detect_guarded_regions, detect_thread_roots,
    load_ontology, tag_domain_concepts, validate_comment, FeatureContext, Ontology, Weights,
};
use crate::error::{Error, Result};
use crate::extraction::{
    associate_comments, extract_comments, load_facts, load_trace, parse_source, scope_identifiers,
    Comment, Entity, EntityKind, FactSet, Span, TraceLog,
};
use crate::graph::{
    self, count_triangles, pagerank, GraphBuilder, KnowledgeGraph, Object, PageRankConfig,
    Predicate, Provenance, Ranks, Source, Triple,
};
use crate::history::{
    link_bug_functions, link_bugs_commits, link_commit_entities, load_bugs, load_commits,
    EntityIndex, LinkOutput, LinkPatterns,
};
use crate::query::TemplateRegistry;
use crate::smart::SmartConfig;
use crate::text::{Normalizer, DEFAULT_STOPWORDS};

pub const RANKS_FILE: &str = "ranks.tsv";
pub const STATS_FILE: &str = "stats.json";
pub const REPORT_FILE: &str = "report.txt";
pub const TEMPLATES_FILE: &str = "templates.jsonl";
pub const TRACE_FILE: &str = "trace.jsonl";
pub const CONFIG_FILE: &str = "config.json";

const SOURCE_EXTENSIONS: [&str; 8] = ["c", "cc", "cpp", "cxx", "h", "hh", "hpp", "hxx"];
const FACTS_EXTENSIONS: [&str; 2] = ["facts", "jsonl"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceMode {
    Parse,
    Facts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceRoot {
    pub path: PathBuf,
    #[serde(default = "default_mode")]
    pub mode: SourceMode,
}

fn default_mode() -> SourceMode {
    SourceMode::Parse
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternConfig {
    #[serde(default)]
    pub bug: Vec<String>,
    #[serde(default)]
    pub change: Vec<String>,
}

/// Project manifest (TOML). Relative paths resolve against the manifest's
/// directory, which is also the root that entity paths are relative to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub sources: Vec<SourceRoot>,
    pub commits: PathBuf,
    pub bugs: PathBuf,
    #[serde(default)]
    pub trace: Option<PathBuf>,
    pub ontology: PathBuf,
    pub weights: PathBuf,
    pub templates: PathBuf,
    pub out: PathBuf,
    #[serde(default)]
    pub stopwords: Option<Vec<String>>,
    #[serde(default)]
    pub alert_cap: Option<usize>,
    #[serde(default)]
    pub similar_threshold: Option<f64>,
    #[serde(default)]
    pub patterns: Option<PatternConfig>,
    #[serde(skip)]
    pub base: PathBuf,
}

impl Manifest {
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut m: Manifest =
            toml::from_str(text).map_err(|e| Error::Config(format!("manifest: {e}")))?;
        m.base = base.to_path_buf();
        if m.sources.is_empty() {
            return Err(Error::Config("manifest: `sources` is empty".into()));
        }
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    /// Every referenced input must exist.
    pub fn check_paths(&self) -> Result<()> {
        let mut required: Vec<&Path> = self.sources.iter().map(|s| s.path.as_path()).collect();
        required.extend([
            self.commits.as_path(),
            &self.bugs,
            &self.ontology,
            &self.weights,
            &self.templates,
        ]);
        required.extend(self.trace.as_deref());
        for p in required {
            let full = self.resolve(p);
            if !full.exists() {
                return Err(Error::io(
                    full,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or directory"),
                ));
            }
        }
        Ok(())
    }

    pub fn normalizer(&self) -> Normalizer {
        match &self.stopwords {
            Some(words) => Normalizer::new(words),
            None => Normalizer::default(),
        }
    }

    pub fn link_patterns(&self) -> Result<LinkPatterns> {
        match &self.patterns {
            None => Ok(LinkPatterns::default()),
            Some(p) => {
                let d = PatternConfig {
                    bug: vec![r"(?i)\bbug#(\d+)".into()],
                    change: vec![r"(?i)\bCR(\d+)".into()],
                };
                let bug = if p.bug.is_empty() { &d.bug } else { &p.bug };
                let change = if p.change.is_empty() {
                    &d.change
                } else {
                    &p.change
                };
                LinkPatterns::new(bug, change)
            }
        }
    }
}

/// Query-time settings persisted next to the graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredConfig {
    pub alert_cap: usize,
    pub similar_threshold: f64,
    pub similar_k: usize,
    pub provenance_limit: usize,
    pub stopwords: Vec<String>,
}

impl StoredConfig {
    pub fn smart(&self) -> SmartConfig {
        SmartConfig {
            alert_cap: self.alert_cap,
            similar_threshold: self.similar_threshold,
            similar_k: self.similar_k,
            provenance_limit: self.provenance_limit,
            normalizer: self.normalizer(),
        }
    }

    pub fn normalizer(&self) -> Normalizer {
        Normalizer::new(&self.stopwords)
    }
}

impl Default for StoredConfig {
    fn default() -> Self {
        let s = SmartConfig::default();
        Self {
            alert_cap: s.alert_cap,
            similar_threshold: s.similar_threshold,
            similar_k: s.similar_k,
            provenance_limit: s.provenance_limit,
            stopwords: DEFAULT_STOPWORDS.iter().map(|w| w.to_string()).collect(),
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    String::from_utf8(bytes).map_err(|_| Error::Decode {
        name: path.display().to_string(),
    })
}

/// `path` relative to `base` with `/` separators.
fn display_path(path: &Path, base: &Path) -> String {
    let rel = path.strip_prefix(base).unwrap_or(path);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

fn collect_files(root: &Path, mode: SourceMode, out: &mut Vec<PathBuf>) -> Result<()> {
    if root.is_file() {
        out.push(root.to_path_buf());
        return Ok(());
    }
    let exts: &[&str] = match mode {
        SourceMode::Parse => &SOURCE_EXTENSIONS,
        SourceMode::Facts => &FACTS_EXTENSIONS,
    };
    let mut entries: Vec<PathBuf> = fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .map(|d| d.map(|d| d.path()))
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::io(root, e))?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_files(&p, mode, out)?;
        } else if p
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| exts.contains(&e))
        {
            out.push(p);
        }
    }
    Ok(())
}

struct FileFacts {
    facts: FactSet,
    comments: Vec<Comment>,
    /// Source text, kept for scope computation (parsed files only).
    text: Option<String>,
}

fn extract_file(
    path: &Path,
    name: &str,
    mode: SourceMode,
    normalizer: &Normalizer,
) -> Result<FileFacts> {
    let text = read_text(path)?;
    match mode {
        SourceMode::Parse => Ok(FileFacts {
            facts: parse_source(&text, name),
            comments: extract_comments(&text, name, normalizer),
            text: Some(text),
        }),
        SourceMode::Facts => Ok(FileFacts {
            facts: load_facts(&text, name)?,
            comments: Vec::new(),
            text: None,
        }),
    }
}

fn relation_triple(r: &crate::extraction::Relation, origin_name: &str) -> Triple {
    let line = r.attr("line").unwrap_or("0");
    let mut prov = Provenance::new(Source::SourceCode, format!("{origin_name}:{line}"));
    for (k, v) in r.attrs.iter().filter(|(k, _)| k.as_str() != "line") {
        prov = prov.with_attr(k.clone(), v.clone());
    }
    Triple::new(r.subj.clone(), r.pred, r.obj.clone(), prov)
}

/// Counts one knowledge source contributed to the graph.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceCounts {
    /// Distinct entities appearing in a triple asserted by the source.
    pub entities: usize,
    /// Distinct triples carrying at least one provenance from the source.
    pub triples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildReport {
    pub entities: usize,
    pub triples: usize,
    pub per_source: BTreeMap<String, SourceCounts>,
    pub warnings: Vec<String>,
}

impl BuildReport {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "entities: {}", self.entities);
        let _ = writeln!(s, "triples: {}", self.triples);
        let _ = writeln!(s, "{:<16} {:>9} {:>9}", "source", "entities", "triples");
        for src in Source::ALL {
            let c = self
                .per_source
                .get(src.as_str())
                .copied()
                .unwrap_or_default();
            let _ = writeln!(s, "{:<16} {:>9} {:>9}", src.as_str(), c.entities, c.triples);
        }
        let _ = writeln!(s, "warnings: {}", self.warnings.len());
        for w in &self.warnings {
            let _ = writeln!(s, "  {w}");
        }
        s
    }
}

/// Everything a build produces, before it is written out.
#[derive(Debug, Clone)]
pub struct BuildOutput {
    pub graph: KnowledgeGraph,
    pub ranks: Ranks<f64>,
    pub templates: TemplateRegistry,
    pub trace: Option<TraceLog>,
    pub config: StoredConfig,
    pub report: BuildReport,
}

/// Runs the whole pipeline in memory.
pub fn build(manifest: &Manifest) -> Result<BuildOutput> {
    manifest.check_paths()?;
    let normalizer = manifest.normalizer();
    let mut warnings: Vec<String> = Vec::new();

    let mut files: Vec<(PathBuf, String, SourceMode)> = Vec::new();
    for root in &manifest.sources {
        let mut found = Vec::new();
        collect_files(&manifest.resolve(&root.path), root.mode, &mut found)?;
        files.extend(found.into_iter().map(|p| {
            let name = display_path(&p, &manifest.base);
            (p, name, root.mode)
        }));
    }
    files.sort_by(|a, b| a.1.cmp(&b.1));
    files.dedup_by(|a, b| a.1 == b.1);

    let extracted: Vec<FileFacts> = files
        .par_iter()
        .map(|(p, name, mode)| extract_file(p, name, *mode, &normalizer))
        .collect::<Result<_>>()?;
    let texts: BTreeMap<String, String> = files
        .iter()
        .zip(&extracted)
        .filter_map(|((_, name, _), f)| f.text.clone().map(|t| (name.clone(), t)))
        .collect();
    let comments: Vec<Comment> = extracted
        .iter()
        .flat_map(|f| f.comments.iter().cloned())
        .collect();
    let mut facts = FactSet::merge(extracted.into_iter().map(|f| f.facts));
    facts.link_externs();
    for e in facts.entities.iter().filter(|e| e.kind == EntityKind::File) {
        if let Some(r) = e.attr("skipped") {
            warnings.push(format!("{}: skipped unparsed lines {r}", e.label));
        }
    }

    let ontology = load_ontology(
        &read_text(&manifest.resolve(&manifest.ontology))?,
        &manifest.ontology.display().to_string(),
        &normalizer,
    )?;
    let weights = Weights::<f64>::from_json(&read_text(&manifest.resolve(&manifest.weights))?)?;
    let templates = TemplateRegistry::from_jsonl(
        &read_text(&manifest.resolve(&manifest.templates))?,
        &manifest.templates.display().to_string(),
        normalizer.clone(),
    )?;
    let trace = match &manifest.trace {
        Some(p) => {
            let t = load_trace(&read_text(&manifest.resolve(p))?, &p.display().to_string())?;
            warnings.extend(t.warnings.iter().cloned());
            Some(t)
        }
        None => None,
    };
    let patterns = manifest.link_patterns()?;
    let log = load_commits(
        &read_text(&manifest.resolve(&manifest.commits))?,
        &manifest.commits.display().to_string(),
    )?;
    warnings.extend(log.warnings.iter().cloned());
    let bugs = load_bugs(
        &read_text(&manifest.resolve(&manifest.bugs))?,
        &manifest.bugs.display().to_string(),
        &patterns,
    )?;

    let mut entities: Vec<Entity> = facts.entities.clone();
    let mut triples: Vec<Triple> = facts
        .relations
        .iter()
        .map(|r| relation_triple(r, crate::ids::path_of(&r.subj).unwrap_or("facts")))
        .collect();

    // Comments: association, concept tags and staleness.
    let declared: BTreeSet<String> = facts
        .entities
        .iter()
        .filter(|e| {
            matches!(
                e.kind,
                EntityKind::Function | EntityKind::Variable | EntityKind::Type | EntityKind::Class
            )
        })
        .filter(|e| e.span.is_some())
        .map(|e| e.label.clone())
        .collect();
    let mut comment_tokens: BTreeMap<String, Vec<Vec<String>>> = BTreeMap::new();
    let by_id: BTreeMap<&str, &Comment> = comments.iter().map(|c| (c.id.as_str(), c)).collect();
    for (cid, eid) in associate_comments(&comments, &facts.entities) {
        let c = by_id[cid.as_str()];
        let scope = match (
            facts.entity(&eid).and_then(|e| e.span.as_ref()),
            texts.get(&c.span.path),
        ) {
            (Some(s), Some(text)) => scope_identifiers(text, s.start, s.end),
            (None, Some(text)) => scope_identifiers(text, 1, usize::MAX),
            _ => BTreeSet::new(),
        };
        let verdict = validate_comment(&c.id, &c.text, &eid, &scope, &declared);
        let mut ce = Entity::new(&c.id, EntityKind::Comment, crate::ids::label_of(&c.id))
            .with_span(Span::new(&c.span.path, c.span.start, c.span.end))
            .with_attr("text", c.text.clone())
            .with_attr("stale", verdict.is_stale().to_string());
        if verdict.is_stale() {
            ce = ce.with_attr("missing", verdict.missing.join(","));
        }
        for (k, v) in &c.attrs {
            ce = ce.with_attr(k.clone(), v.clone());
        }
        entities.push(ce);
        triples.push(Triple::new(
            eid.clone(),
            Predicate::DocumentedBy,
            Object::entity(c.id.clone()),
            Provenance::new(Source::Comment, format!("{}:{}", c.span.path, c.span.start)),
        ));
        triples.extend(tag_domain_concepts(c, &eid, &ontology));
        comment_tokens
            .entry(eid)
            .or_default()
            .push(c.tokens.clone());
    }
    entities.extend(concept_entities(&ontology));

    // History.
    let index = EntityIndex::from_entities(&facts.entities);
    let mut linked = LinkOutput::default();
    for c in &log.commits {
        linked.extend(link_commit_entities(c, &index));
    }
    linked.extend(link_bugs_commits(&bugs, &log.commits, &patterns));
    let functions: Vec<Entity> = facts
        .entities
        .iter()
        .filter(|e| e.kind == EntityKind::Function)
        .cloned()
        .collect();
    let bug_funcs = link_bug_functions(&bugs, &functions, &linked.triples);
    warnings.extend(linked.warnings);
    entities.extend(linked.entities);
    triples.extend(linked.triples);
    triples.extend(bug_funcs);

    // Threads, guards, strategies.
    let (_, root_triples) = detect_thread_roots(&facts, trace.as_ref());
    triples.extend(root_triples);
    if let Some(t) = &trace {
        triples.extend(detect_guarded_regions(t));
    }
    triples.extend(strategy_triples(
        &facts,
        comment_tokens,
        trace.as_ref(),
        &weights,
        &ontology,
    )?);

    let mut builder = GraphBuilder::new();
    for e in entities {
        builder.add_entity(e)?;
    }
    for (id, value) in sync_attrs(&facts, &triples) {
        builder.set_attr(&id, "sync", value)?;
    }
    for t in triples {
        builder.insert_triple(t)?;
    }
    let graph = builder.finalize()?;
    let ranks = pagerank(&graph, &PageRankConfig::default())?;

    let defaults = StoredConfig::default();
    let config = StoredConfig {
        alert_cap: manifest.alert_cap.unwrap_or(defaults.alert_cap),
        similar_threshold: manifest
            .similar_threshold
            .unwrap_or(defaults.similar_threshold),
        stopwords: normalizer.stopwords().map(str::to_string).collect(),
        ..defaults
    };
    let report = BuildReport {
        entities: graph.entity_count(),
        triples: graph.triple_count(),
        per_source: source_counts(&graph),
        warnings,
    };
    Ok(BuildOutput {
        graph,
        ranks,
        templates,
        trace,
        config,
        report,
    })
}

fn concept_entities(ontology: &Ontology) -> Vec<Entity> {
    ontology
        .concept_entities()
        .into_iter()
        .map(|(id, (term, synonyms))| {
            let e = Entity::new(id, EntityKind::Concept, term);
            if synonyms.is_empty() {
                e
            } else {
                e.with_attr(
                    "synonyms",
                    serde_json::to_string(&synonyms).expect("strings serialize"),
                )
            }
        })
        .collect()
}

fn strategy_triples(
    facts: &FactSet,
    comment_tokens: BTreeMap<String, Vec<Vec<String>>>,
    trace: Option<&TraceLog>,
    weights: &Weights<f64>,
    ontology: &Ontology,
) -> Result<Vec<Triple>> {
    let ctx = FeatureContext::new(facts, comment_tokens, trace);
    let classes: Vec<String> = weights.class_names().map(str::to_string).collect();
    let mut out = Vec::new();
    for f in facts
        .entities
        .iter()
        .filter(|e| e.kind == EntityKind::Function)
    {
        let Some(span) = &f.span else { continue };
        let fv = compute_features::<f64>(f, &ctx, &classes, ontology)?;
        let label = classify_strategy(&fv, weights);
        if !label.is_classified() {
            continue;
        }
        let prov = Provenance::new(Source::SourceCode, format!("{}:{}", span.path, span.start))
            .tagged("strategy")
            .with_attr("score", format!("{:.6}", label.score));
        out.push(Triple::new(
            f.id.clone(),
            Predicate::ClassifiedAs,
            Object::entity(crate::ids::concept(&label.class)),
            prov,
        ));
    }
    Ok(out)
}

/// `sync` for accessed globals: "unsynchronized" when some function reads or
/// writes the variable without a `guards` triple for it.
fn sync_attrs(facts: &FactSet, triples: &[Triple]) -> BTreeMap<String, &'static str> {
    let guarded: BTreeSet<(&str, &str)> = triples
        .iter()
        .filter(|t| t.predicate == Predicate::Guards)
        .filter_map(|t| t.object.as_entity().map(|v| (t.subject.as_str(), v)))
        .collect();
    let mut out = BTreeMap::new();
    for t in triples
        .iter()
        .filter(|t| matches!(t.predicate, Predicate::Reads | Predicate::Writes))
    {
        let Some(v) = t.object.as_entity() else {
            continue;
        };
        if !facts.entity(v).is_some_and(Entity::is_global_var) {
            continue;
        }
        let unguarded = !guarded.contains(&(t.subject.as_str(), v));
        let slot = out.entry(v.to_string()).or_insert("synchronized");
        if unguarded {
            *slot = "unsynchronized";
        }
    }
    out
}

fn source_counts(graph: &KnowledgeGraph) -> BTreeMap<String, SourceCounts> {
    let mut ents: BTreeMap<Source, BTreeSet<&str>> = BTreeMap::new();
    let mut counts: BTreeMap<String, SourceCounts> = Source::ALL
        .iter()
        .map(|s| (s.as_str().to_string(), SourceCounts::default()))
        .collect();
    for t in graph.triples() {
        let sources: BTreeSet<Source> = t.provenance.iter().map(|p| p.source).collect();
        for s in sources {
            counts
                .get_mut(s.as_str())
                .expect("all sources present")
                .triples += 1;
            let set = ents.entry(s).or_default();
            set.insert(t.subject);
            if let Some(o) = t.object.as_entity() {
                set.insert(o);
            }
        }
    }
    for (s, set) in ents {
        counts
            .get_mut(s.as_str())
            .expect("all sources present")
            .entities = set.len();
    }
    counts
}

fn render_ranks(ranks: &Ranks<f64>) -> String {
    let mut rows: Vec<(&str, f64)> = ranks.iter().collect();
    rows.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    rows.iter()
        .map(|(id, s)| format!("{id}\t{s:.17e}\n"))
        .collect()
}

fn parse_ranks(text: &str, name: &str) -> Result<Ranks<f64>> {
    let mut scores = BTreeMap::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.is_empty()) {
        let (id, s) = line
            .split_once('\t')
            .ok_or_else(|| Error::format(name, i + 1, "expected `id<TAB>score`"))?;
        let v: f64 = s
            .parse()
            .map_err(|_| Error::format(name, i + 1, format!("bad score `{s}`")))?;
        scores.insert(id.to_string(), v);
    }
    Ok(Ranks::from_scores(scores))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedNode {
    pub id: String,
    pub label: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HubNode {
    pub id: String,
    pub label: String,
    pub triangles: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub entities: usize,
    pub triples: usize,
    pub kinds: BTreeMap<String, usize>,
    pub triangles: u64,
    pub top_pagerank: Vec<RankedNode>,
    pub top_triangles: Vec<HubNode>,
}

pub fn compute_stats(graph: &KnowledgeGraph, ranks: &Ranks<f64>) -> GraphStats {
    let mut kinds: BTreeMap<String, usize> = BTreeMap::new();
    for e in graph.entities() {
        *kinds.entry(e.kind.as_str().to_string()).or_default() += 1;
    }
    let label = |id: &str| {
        graph
            .entity(id)
            .map_or_else(|| crate::ids::label_of(id), |e| e.label.clone())
    };
    let tri = count_triangles(graph);
    GraphStats {
        entities: graph.entity_count(),
        triples: graph.triple_count(),
        kinds,
        triangles: tri.total,
        top_pagerank: ranks
            .top(10)
            .into_iter()
            .map(|(id, s)| RankedNode {
                id: id.into(),
                label: label(id),
                score: s,
            })
            .collect(),
        top_triangles: tri
            .top(10)
            .into_iter()
            .map(|(id, n)| HubNode {
                id: id.into(),
                label: label(id),
                triangles: n,
            })
            .collect(),
    }
}

impl BuildOutput {
    /// Writes every output file into `dir` (which must exist).
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        graph::save(&self.graph, dir)?;
        let stats = compute_stats(&self.graph, &self.ranks);
        let files: [(&str, String); 6] = [
            (RANKS_FILE, render_ranks(&self.ranks)),
            (
                STATS_FILE,
                serde_json::to_string_pretty(&stats).expect("stats serialize") + "\n",
            ),
            (REPORT_FILE, self.report.render()),
            (TEMPLATES_FILE, self.templates.to_jsonl()),
            (
                TRACE_FILE,
                self.trace
                    .as_ref()
                    .map(TraceLog::to_lines)
                    .unwrap_or_default(),
            ),
            (
                CONFIG_FILE,
                serde_json::to_string_pretty(&self.config).expect("config serializes") + "\n",
            ),
        ];
        for (name, body) in files {
            let p = dir.join(name);
            fs::write(&p, body).map_err(|e| Error::io(p, e))?;
        }
        Ok(())
    }
}

/// Builds from `manifest` and replaces its output directory. Outputs are
/// staged in `<out>.partial` and removed again on failure.
pub fn build_to_disk(manifest: &Manifest) -> Result<BuildReport> {
    let out = manifest.resolve(&manifest.out);
    let mut staging = out.clone().into_os_string();
    staging.push(".partial");
    let staging = PathBuf::from(staging);
    let result = (|| {
        let built = build(manifest)?;
        if staging.exists() {
            fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
        }
        fs::create_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
        built.write_to(&staging)?;
        if out.exists() {
            fs::remove_dir_all(&out).map_err(|e| Error::io(&out, e))?;
        }
        fs::rename(&staging, &out).map_err(|e| Error::io(&out, e))?;
        Ok(built.report)
    })();
    if result.is_err() && staging.exists() {
        let _ = fs::remove_dir_all(&staging);
    }
    result
}

/// A built output directory loaded for querying.
#[derive(Debug, Clone)]
pub struct LoadedGraph {
    pub dir: PathBuf,
    pub graph: KnowledgeGraph,
    pub ranks: Ranks<f64>,
    pub templates: TemplateRegistry,
    pub trace: Option<TraceLog>,
    pub config: StoredConfig,
}

impl LoadedGraph {
    pub fn open(dir: &Path) -> Result<Self> {
        if !dir.is_dir() {
            return Err(Error::io(
                dir,
                std::io::Error::new(std::io::ErrorKind::NotFound, "graph directory not found"),
            ));
        }
        let graph = graph::load(dir)?;
        let ranks = parse_ranks(&read_text(&dir.join(RANKS_FILE))?, RANKS_FILE)?;
        let config: StoredConfig = serde_json::from_str(&read_text(&dir.join(CONFIG_FILE))?)
            .map_err(|e| Error::format(CONFIG_FILE, e.line(), e.to_string()))?;
        let templates = TemplateRegistry::from_jsonl(
            &read_text(&dir.join(TEMPLATES_FILE))?,
            TEMPLATES_FILE,
            config.normalizer(),
        )?;
        let trace_text = read_text(&dir.join(TRACE_FILE))?;
        let trace = if trace_text.trim().is_empty() {
            None
        } else {
            Some(load_trace(&trace_text, TRACE_FILE)?)
        };
        Ok(Self {
            dir: dir.to_path_buf(),
            graph,
            ranks,
            templates,
            trace,
            config,
        })
    }
}
