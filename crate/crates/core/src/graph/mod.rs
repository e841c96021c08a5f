//! The knowledge graph: provenance-carrying triples over typed entities,
//! with three sorted indexes, analytics and flat-file persistence.

mod pagerank;
mod persist;
mod triangles;
mod triple;

use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::ops::Bound;

pub use pagerank::{pagerank, pagerank_observed, power_iteration, PageRankConfig, Ranks};
pub use persist::{load, render_nodes, render_triples, save, NODES_FILE, TRIPLES_FILE};
pub use triangles::{count_triangles, TriangleCounts};
pub use triple::{Object, Predicate, Provenance, Source, Triple, TripleKey};

use crate::error::{Error, Result};
use crate::extraction::Entity;
use crate::ids;

type TermId = u32;

/// Accumulates entities and triples; `finalize` produces the immutable graph.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    /// id -> (entity, explicitly registered)
    entities: BTreeMap<String, (Entity, bool)>,
    triples: BTreeMap<TripleKey, Vec<Provenance>>,
    finalized: bool,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    fn check_open(&self) -> Result<()> {
        if self.finalized {
            Err(Error::Finalized)
        } else {
            Ok(())
        }
    }

    /// Registers an entity. An explicit entity replaces an auto-registered
    /// placeholder; a second explicit registration only adds missing attrs.
    pub fn add_entity(&mut self, entity: Entity) -> Result<()> {
        self.check_open()?;
        if !ids::is_well_formed(&entity.id) {
            return Err(Error::InvalidId(entity.id));
        }
        match self.entities.entry(entity.id.clone()) {
            Entry::Vacant(v) => {
                v.insert((entity, true));
            }
            Entry::Occupied(mut o) => {
                let (existing, explicit) = o.get_mut();
                if *explicit {
                    for (k, v) in entity.attrs {
                        existing.attrs.entry(k).or_insert(v);
                    }
                    if existing.span.is_none() {
                        existing.span = entity.span;
                    }
                } else {
                    *existing = entity;
                    *explicit = true;
                }
            }
        }
        Ok(())
    }

    /// Overwrites one attribute on a registered entity.
    pub fn set_attr(&mut self, id: &str, key: &str, value: impl Into<String>) -> Result<()> {
        self.check_open()?;
        let (e, _) = self
            .entities
            .get_mut(id)
            .ok_or_else(|| Error::NotFound(id.to_string()))?;
        e.attrs.insert(key.to_string(), value.into());
        Ok(())
    }

    pub fn entity(&self, id: &str) -> Option<&Entity> {
        self.entities.get(id).map(|(e, _)| e)
    }

    fn auto_register(&mut self, id: &str) -> Result<()> {
        if self.entities.contains_key(id) {
            return Ok(());
        }
        let kind = ids::kind_of(id).ok_or_else(|| Error::InvalidId(id.to_string()))?;
        if !ids::is_well_formed(id) {
            return Err(Error::InvalidId(id.to_string()));
        }
        self.entities.insert(
            id.to_string(),
            (Entity::new(id, kind, ids::label_of(id)), false),
        );
        Ok(())
    }

    /// Inserts with set semantics; a duplicate (s, p, o) appends its provenance.
    pub fn insert_triple(&mut self, triple: Triple) -> Result<()> {
        self.check_open()?;
        if matches!(triple.object, Object::Literal(_)) && !triple.predicate.allows_literal() {
            return Err(Error::LiteralPosition(triple.predicate.to_string()));
        }
        self.auto_register(&triple.subject)?;
        if let Object::Entity(o) = &triple.object {
            self.auto_register(o)?;
        }
        let key = triple.key();
        self.triples.entry(key).or_default().push(triple.provenance);
        Ok(())
    }

    /// Like `insert_triple` with the predicate given by name.
    pub fn insert(
        &mut self,
        subject: &str,
        predicate: &str,
        object: Object,
        provenance: Provenance,
    ) -> Result<()> {
        let predicate: Predicate = predicate.parse()?;
        self.insert_triple(Triple::new(subject, predicate, object, provenance))
    }

    pub fn triple_count(&self) -> usize {
        self.triples.len()
    }

    pub fn provenance(&self, key: &TripleKey) -> Option<&[Provenance]> {
        self.triples.get(key).map(Vec::as_slice)
    }

    /// Freezes the builder; further mutation returns `Error::Finalized`.
    pub fn finalize(&mut self) -> Result<KnowledgeGraph> {
        self.check_open()?;
        self.finalized = true;
        let entities: BTreeMap<String, Entity> = std::mem::take(&mut self.entities)
            .into_iter()
            .map(|(k, (e, _))| (k, e))
            .collect();
        let triples = std::mem::take(&mut self.triples);
        Ok(KnowledgeGraph::assemble(entities, triples))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct StoredTriple {
    s: TermId,
    p: Predicate,
    o: TermId,
    provenance: Vec<Provenance>,
}

/// Which index a pattern lookup uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexOrder {
    Spo,
    Pos,
    Osp,
}

/// Immutable, indexed triple collection plus the entity table.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct KnowledgeGraph {
    entities: BTreeMap<String, Entity>,
    /// Sorted: all entity ids (ascending) followed by literals (ascending).
    terms: Vec<Object>,
    entity_count: usize,
    triples: Vec<StoredTriple>,
    spo: BTreeSet<(TermId, Predicate, TermId, u32)>,
    pos: BTreeSet<(Predicate, TermId, TermId, u32)>,
    osp: BTreeSet<(TermId, TermId, Predicate, u32)>,
}

/// Borrowed view of one stored triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TripleView<'g> {
    pub subject: &'g str,
    pub predicate: Predicate,
    pub object: &'g Object,
    pub provenance: &'g [Provenance],
}

impl TripleView<'_> {
    pub fn key(&self) -> TripleKey {
        TripleKey {
            subject: self.subject.to_string(),
            predicate: self.predicate,
            object: self.object.clone(),
        }
    }
}

/// `(s?, p?, o?)` lookup pattern; `None` is a wildcard.
#[derive(Debug, Clone, Copy, Default)]
pub struct TriplePattern<'a> {
    pub subject: Option<&'a str>,
    pub predicate: Option<Predicate>,
    pub object: Option<&'a Object>,
}

impl<'a> TriplePattern<'a> {
    pub fn new(
        subject: Option<&'a str>,
        predicate: Option<Predicate>,
        object: Option<&'a Object>,
    ) -> Self {
        Self {
            subject,
            predicate,
            object,
        }
    }

    pub fn index(&self) -> IndexOrder {
        match (
            self.subject.is_some(),
            self.predicate.is_some(),
            self.object.is_some(),
        ) {
            (true, false, true) => IndexOrder::Osp,
            (true, _, _) => IndexOrder::Spo,
            (false, true, _) => IndexOrder::Pos,
            (false, false, true) => IndexOrder::Osp,
            (false, false, false) => IndexOrder::Spo,
        }
    }

    pub fn matches(&self, t: &TripleView<'_>) -> bool {
        self.subject.is_none_or(|s| s == t.subject)
            && self.predicate.is_none_or(|p| p == t.predicate)
            && self.object.is_none_or(|o| o == t.object)
    }
}

const PMIN: Predicate = Predicate::Declares;
const PMAX: Predicate = Predicate::Precedes;

impl KnowledgeGraph {
    fn assemble(
        entities: BTreeMap<String, Entity>,
        triples: BTreeMap<TripleKey, Vec<Provenance>>,
    ) -> Self {
        let literals: BTreeSet<&Object> = triples
            .keys()
            .map(|k| &k.object)
            .filter(|o| matches!(o, Object::Literal(_)))
            .collect();
        let mut terms: Vec<Object> = entities
            .keys()
            .map(|id| Object::Entity(id.clone()))
            .collect();
        let entity_count = terms.len();
        terms.extend(literals.into_iter().cloned());

        let mut g = KnowledgeGraph {
            entities,
            terms,
            entity_count,
            ..Default::default()
        };
        for (key, provenance) in triples {
            let s = g.entity_term(&key.subject).expect("subject registered");
            let o = g.term(&key.object).expect("object registered");
            let idx = g.triples.len() as u32;
            g.triples.push(StoredTriple {
                s,
                p: key.predicate,
                o,
                provenance,
            });
            g.spo.insert((s, key.predicate, o, idx));
            g.pos.insert((key.predicate, o, s, idx));
            g.osp.insert((o, s, key.predicate, idx));
        }
        g
    }

    fn entity_term(&self, id: &str) -> Option<TermId> {
        self.terms[..self.entity_count]
            .binary_search_by(|t| t.text().cmp(id))
            .ok()
            .map(|i| i as TermId)
    }

    fn term(&self, obj: &Object) -> Option<TermId> {
        match obj {
            Object::Entity(id) => self.entity_term(id),
            Object::Literal(_) => self.terms[self.entity_count..]
                .binary_search(obj)
                .ok()
                .map(|i| (i + self.entity_count) as TermId),
        }
    }

    fn view(&self, idx: u32) -> TripleView<'_> {
        let t = &self.triples[idx as usize];
        TripleView {
            subject: self.terms[t.s as usize].text(),
            predicate: t.p,
            object: &self.terms[t.o as usize],
            provenance: &t.provenance,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn entity(&self, id: &str) -> Option<&Entity> {
        self.entities.get(id)
    }

    pub fn entities(&self) -> impl Iterator<Item = &Entity> {
        self.entities.values()
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn triple_count(&self) -> usize {
        self.triples.len()
    }

    /// All triples in subject-predicate-object order.
    pub fn triples(&self) -> impl Iterator<Item = TripleView<'_>> {
        (0..self.triples.len() as u32).map(move |i| self.view(i))
    }

    pub fn contains(&self, subject: &str, predicate: Predicate, object: &Object) -> bool {
        self.matching(TriplePattern::new(
            Some(subject),
            Some(predicate),
            Some(object),
        ))
        .next()
        .is_some()
    }

    /// Triples matching every bound position, in the order of the most
    /// selective index for the pattern's shape.
    pub fn matching<'g>(
        &'g self,
        pat: TriplePattern<'_>,
    ) -> Box<dyn Iterator<Item = TripleView<'g>> + 'g> {
        let s = match pat.subject {
            Some(s) => match self.entity_term(s) {
                Some(t) => Some(t),
                None => return Box::new(std::iter::empty()),
            },
            None => None,
        };
        let o = match pat.object {
            Some(o) => match self.term(o) {
                Some(t) => Some(t),
                None => return Box::new(std::iter::empty()),
            },
            None => None,
        };
        let p = pat.predicate;
        match (s, p, o) {
            (Some(s), Some(p), Some(o)) => Box::new(
                self.spo
                    .range((
                        Bound::Included((s, p, o, 0)),
                        Bound::Included((s, p, o, u32::MAX)),
                    ))
                    .map(move |k| self.view(k.3)),
            ),
            (Some(s), Some(p), None) => Box::new(
                self.spo
                    .range((
                        Bound::Included((s, p, 0, 0)),
                        Bound::Included((s, p, TermId::MAX, u32::MAX)),
                    ))
                    .map(move |k| self.view(k.3)),
            ),
            (Some(s), None, Some(o)) => Box::new(
                self.osp
                    .range((
                        Bound::Included((o, s, PMIN, 0)),
                        Bound::Included((o, s, PMAX, u32::MAX)),
                    ))
                    .map(move |k| self.view(k.3)),
            ),
            (Some(s), None, None) => Box::new(
                self.spo
                    .range((
                        Bound::Included((s, PMIN, 0, 0)),
                        Bound::Included((s, PMAX, TermId::MAX, u32::MAX)),
                    ))
                    .map(move |k| self.view(k.3)),
            ),
            (None, Some(p), Some(o)) => Box::new(
                self.pos
                    .range((
                        Bound::Included((p, o, 0, 0)),
                        Bound::Included((p, o, TermId::MAX, u32::MAX)),
                    ))
                    .map(move |k| self.view(k.3)),
            ),
            (None, Some(p), None) => Box::new(
                self.pos
                    .range((
                        Bound::Included((p, 0, 0, 0)),
                        Bound::Included((p, TermId::MAX, TermId::MAX, u32::MAX)),
                    ))
                    .map(move |k| self.view(k.3)),
            ),
            (None, None, Some(o)) => Box::new(
                self.osp
                    .range((
                        Bound::Included((o, 0, PMIN, 0)),
                        Bound::Included((o, TermId::MAX, PMAX, u32::MAX)),
                    ))
                    .map(move |k| self.view(k.3)),
            ),
            (None, None, None) => Box::new(self.spo.iter().map(move |k| self.view(k.3))),
        }
    }

    pub fn outgoing<'g>(
        &'g self,
        subject: &'g str,
        predicate: Predicate,
    ) -> impl Iterator<Item = &'g str> + 'g {
        self.matching(TriplePattern::new(Some(subject), Some(predicate), None))
            .filter_map(|t| t.object.as_entity())
    }

    pub fn incoming<'g>(
        &'g self,
        object: &str,
        predicate: Predicate,
    ) -> impl Iterator<Item = &'g str> + 'g {
        let obj = Object::entity(object);
        self.matching(TriplePattern::new(None, Some(predicate), Some(&obj)))
            .map(|t| t.subject)
            .collect::<Vec<_>>()
            .into_iter()
    }

    pub fn provenance(&self, key: &TripleKey) -> Option<&[Provenance]> {
        self.matching(TriplePattern::new(
            Some(&key.subject),
            Some(key.predicate),
            Some(&key.object),
        ))
        .next()
        .map(|t| t.provenance)
    }

    /// The triple keys as enumerated by each of the three indexes (spo, pos, osp).
    pub fn index_enumerations(&self) -> [Vec<TripleKey>; 3] {
        let spo = self.spo.iter().map(|k| self.view(k.3).key()).collect();
        let pos = self.pos.iter().map(|k| self.view(k.3).key()).collect();
        let osp = self.osp.iter().map(|k| self.view(k.3).key()).collect();
        [spo, pos, osp]
    }

    /// Entity ids in ascending order; position = node index used by the analytics.
    pub(crate) fn node_ids(&self) -> impl Iterator<Item = &str> {
        self.terms[..self.entity_count].iter().map(Object::text)
    }

    /// Entity-to-entity edges (subject index, object index), one per triple.
    pub(crate) fn entity_edges(&self) -> Vec<(usize, usize)> {
        self.triples
            .iter()
            .filter(|t| (t.o as usize) < self.entity_count)
            .map(|t| (t.s as usize, t.o as usize))
            .collect()
    }

    /// Induced subgraph of entities within undirected distance `radius` of
    /// `node`, with the entity-to-entity triples among them.
    pub fn neighborhood(&self, node: &str, radius: usize) -> Result<KnowledgeGraph> {
        let start = self
            .entity_term(node)
            .ok_or_else(|| Error::NotFound(node.to_string()))? as usize;
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); self.entity_count];
        for (s, o) in self.entity_edges() {
            adj[s].push(o);
            adj[o].push(s);
        }
        let mut dist = vec![usize::MAX; self.entity_count];
        dist[start] = 0;
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            if dist[u] == radius {
                continue;
            }
            for &v in &adj[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        let keep: BTreeSet<usize> = (0..self.entity_count)
            .filter(|&i| dist[i] != usize::MAX)
            .collect();
        let entities: BTreeMap<String, Entity> = keep
            .iter()
            .map(|&i| {
                let id = self.terms[i].text();
                (id.to_string(), self.entities[id].clone())
            })
            .collect();
        let triples: BTreeMap<TripleKey, Vec<Provenance>> = self
            .triples
            .iter()
            .enumerate()
            .filter(|(_, t)| keep.contains(&(t.s as usize)) && keep.contains(&(t.o as usize)))
            .map(|(i, t)| (self.view(i as u32).key(), t.provenance.clone()))
            .collect();
        Ok(KnowledgeGraph::assemble(entities, triples))
    }
}
