use std::collections::{BTreeMap, BTreeSet};

use super::KnowledgeGraph;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TriangleCounts {
    /// Every entity, including those in no triangle.
    pub per_node: BTreeMap<String, u64>,
    pub total: u64,
}

impl TriangleCounts {
    /// Highest counts first, ties by id ascending; zero counts excluded.
    pub fn top(&self, n: usize) -> Vec<(&str, u64)> {
        let mut v: Vec<_> = self
            .per_node
            .iter()
            .filter(|(_, &c)| c > 0)
            .map(|(k, &c)| (k.as_str(), c))
            .collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        v.truncate(n);
        v
    }
}

/// Counts triangles in the undirected simple projection of the entity graph
/// (direction and parallel edges collapsed, self-loops dropped).
pub fn count_triangles(graph: &KnowledgeGraph) -> TriangleCounts {
    let ids: Vec<&str> = graph.node_ids().collect();
    let n = ids.len();
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for (s, o) in graph.entity_edges() {
        if s != o {
            adj[s].insert(o);
            adj[o].insert(s);
        }
    }
    let mut per = vec![0u64; n];
    let mut total = 0u64;
    for u in 0..n {
        for &v in adj[u].range(u + 1..) {
            for &w in adj[v].range(v + 1..) {
                if adj[u].contains(&w) {
                    per[u] += 1;
                    per[v] += 1;
                    per[w] += 1;
                    total += 1;
                }
            }
        }
    }
    TriangleCounts {
        per_node: ids.into_iter().map(str::to_string).zip(per).collect(),
        total,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{GraphBuilder, Object, Predicate, Provenance, Source, Triple};

    fn graph(edges: &[(&str, &str)]) -> KnowledgeGraph {
        let mut b = GraphBuilder::new();
        for (s, o) in edges {
            b.insert_triple(Triple::new(
                *s,
                Predicate::Calls,
                Object::entity(*o),
                Provenance::new(Source::SourceCode, "t"),
            ))
            .unwrap();
        }
        b.finalize().unwrap()
    }

    #[test]
    fn k3() {
        let t = count_triangles(&graph(&[
            ("func:a", "func:b"),
            ("func:b", "func:c"),
            ("func:c", "func:a"),
        ]));
        assert_eq!(t.total, 1);
        assert!(t.per_node.values().all(|&c| c == 1));
    }

    #[test]
    fn k4_with_parallel_and_reverse_edges() {
        let nodes = ["func:a", "func:b", "func:c", "func:d"];
        let mut edges = Vec::new();
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    edges.push((nodes[i], nodes[j]));
                }
            }
        }
        edges.push(("func:a", "func:a"));
        let t = count_triangles(&graph(&edges));
        assert_eq!(t.total, 4);
        assert_eq!(t.per_node.values().sum::<u64>(), 12);
    }
}
