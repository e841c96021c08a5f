//! Damped power-iteration PageRank over the entity graph, generic over the
//! scalar type.

use std::collections::BTreeMap;

use super::KnowledgeGraph;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PageRankConfig<T> {
    pub damping: T,
    pub tolerance: T,
    pub max_iter: usize,
}

impl<T: Scalar> Default for PageRankConfig<T> {
    fn default() -> Self {
        Self {
            damping: T::from_f64_lossy(0.85),
            tolerance: T::from_f64_lossy(1e-9),
            max_iter: 100,
        }
    }
}

/// Node id -> score. Scores are non-negative and sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranks<T> {
    scores: BTreeMap<String, T>,
    pub iterations: usize,
    pub converged: bool,
}

impl<T: Scalar> Default for Ranks<T> {
    fn default() -> Self {
        Self {
            scores: BTreeMap::new(),
            iterations: 0,
            converged: true,
        }
    }
}

impl<T: Scalar> Ranks<T> {
    pub fn from_scores(scores: BTreeMap<String, T>) -> Self {
        Self {
            scores,
            iterations: 0,
            converged: true,
        }
    }

    /// Score of `id`; unknown ids rank 0.
    pub fn get(&self, id: &str) -> T {
        self.scores.get(id).copied().unwrap_or_else(T::zero)
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, T)> {
        self.scores.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn sum(&self) -> T {
        self.scores.values().fold(T::zero(), |a, &b| a + b)
    }

    /// Highest-ranked `n` ids, ties broken by id ascending.
    pub fn top(&self, n: usize) -> Vec<(&str, T)> {
        let mut v: Vec<_> = self.iter().collect();
        v.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.0.cmp(b.0))
        });
        v.truncate(n);
        v
    }
}

/// Power iteration on `n` nodes with directed `edges` (parallel edges count
/// separately). Dangling mass is spread uniformly each step. `observer` sees
/// every iterate. Returns the normalized vector, iteration count and whether
/// the L1 delta fell below the tolerance.
pub fn power_iteration<T: Scalar>(
    n: usize,
    edges: &[(usize, usize)],
    cfg: &PageRankConfig<T>,
    mut observer: impl FnMut(usize, &[T]),
) -> (Vec<T>, usize, bool) {
    if n == 0 {
        return (Vec::new(), 0, true);
    }
    let nf = T::from_count(n);
    let d = cfg.damping;
    let mut out_degree = vec![0usize; n];
    for &(s, _) in edges {
        out_degree[s] += 1;
    }
    let mut rank = vec![T::one() / nf; n];
    let mut next = vec![T::zero(); n];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < cfg.max_iter {
        iterations += 1;
        let dangling = (0..n)
            .filter(|&i| out_degree[i] == 0)
            .fold(T::zero(), |a, i| a + rank[i]);
        let base = (T::one() - d) / nf + d * dangling / nf;
        next.iter_mut().for_each(|x| *x = base);
        for &(s, o) in edges {
            next[o] = next[o] + d * rank[s] / T::from_count(out_degree[s]);
        }
        let delta = rank
            .iter()
            .zip(&next)
            .fold(T::zero(), |a, (x, y)| a + (*x - *y).abs());
        std::mem::swap(&mut rank, &mut next);
        observer(iterations, &rank);
        if delta < cfg.tolerance {
            converged = true;
            break;
        }
    }
    let total = rank.iter().fold(T::zero(), |a, &b| a + b);
    if total > T::zero() {
        rank.iter_mut().for_each(|x| *x = *x / total);
    }
    (rank, iterations, converged)
}

/// PageRank over entities; edges run subject -> object for every triple with
/// an entity object.
pub fn pagerank<T: Scalar>(graph: &KnowledgeGraph, cfg: &PageRankConfig<T>) -> Result<Ranks<T>> {
    pagerank_observed(graph, cfg, |_, _| {})
}

pub fn pagerank_observed<T: Scalar>(
    graph: &KnowledgeGraph,
    cfg: &PageRankConfig<T>,
    observer: impl FnMut(usize, &[T]),
) -> Result<Ranks<T>> {
    if !(cfg.damping > T::zero() && cfg.damping < T::one()) {
        return Err(Error::Config(format!(
            "damping must lie in (0, 1), got {}",
            cfg.damping
        )));
    }
    let ids: Vec<&str> = graph.node_ids().collect();
    let (scores, iterations, converged) =
        power_iteration(ids.len(), &graph.entity_edges(), cfg, observer);
    Ok(Ranks {
        scores: ids.into_iter().map(str::to_string).zip(scores).collect(),
        iterations,
        converged,
    })
}
