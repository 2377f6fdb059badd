//! Color refinement: plain 1-WL on the relation-free view of a graph and
//! the head-anchored relational refinement that bounds what the model
//! can tell apart.
//!
//! Each round maps every entity to `(old color, sorted neighbor
//! multiset)` and renumbers the distinct tuples `0..k` in sorted order,
//! so color ids are canonical: they depend only on the tuples, not on
//! entity numbering or hashing.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{KnowledgeGraph, Triplet};
use crate::model::{forward_on_edges, ModelParams, Noise};

/// Colors of every entity after refinement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Coloring {
    pub colors: Vec<usize>,
    /// Refinement rounds performed.
    pub rounds: usize,
    /// Whether the last round left the partition unchanged.
    pub stable: bool,
}

/// [`Coloring`] anchored at a fixed head entity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PairColoring {
    pub head: usize,
    pub coloring: Coloring,
}

impl Coloring {
    pub fn num_classes(&self) -> usize {
        self.colors.iter().max().map_or(0, |m| m + 1)
    }

    /// Entities grouped by color, in color order.
    pub fn classes(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_classes()];
        for (u, &c) in self.colors.iter().enumerate() {
            out[c].push(u);
        }
        out
    }
}

fn renumber<T: Ord + Clone>(keys: &[T]) -> Vec<usize> {
    let ids: BTreeMap<T, usize> = {
        let mut sorted: Vec<T> = keys.to_vec();
        sorted.sort();
        sorted.dedup();
        sorted.into_iter().enumerate().map(|(i, k)| (k, i)).collect()
    };
    keys.iter().map(|k| ids[k]).collect()
}

/// Refines `init` with neighbor lists of `(neighbor, label)` pairs until
/// the partition stops splitting or `max_rounds` rounds have run.
fn refine(neighbors: &[Vec<(usize, usize)>], init: &[usize], max_rounds: usize) -> Coloring {
    let mut colors = renumber(init);
    let mut classes = colors.iter().max().map_or(0, |m| m + 1);
    for round in 0..max_rounds {
        let keys: Vec<(usize, Vec<(usize, usize)>)> = neighbors
            .iter()
            .enumerate()
            .map(|(u, ns)| {
                let mut ms: Vec<(usize, usize)> = ns.iter().map(|&(w, l)| (colors[w], l)).collect();
                ms.sort_unstable();
                (colors[u], ms)
            })
            .collect();
        let next = renumber(&keys);
        let next_classes = next.iter().max().map_or(0, |m| m + 1);
        // Refinement only ever splits classes, so an equal count means an
        // equal partition.
        if next_classes == classes {
            return Coloring {
                colors: next,
                rounds: round + 1,
                stable: true,
            };
        }
        colors = next;
        classes = next_classes;
    }
    Coloring {
        colors,
        rounds: max_rounds,
        stable: false,
    }
}

/// Classic 1-WL on the simple undirected graph underlying `graph`
/// (relations, directions, multi-edges and self-loops dropped), starting
/// from a single color.
pub fn wl_refine(graph: &KnowledgeGraph, max_rounds: usize) -> Coloring {
    let n = graph.num_entities();
    let mut adjacency = vec![Vec::new(); n];
    for t in graph.edges() {
        if t.head != t.tail {
            adjacency[t.head].push(t.tail);
            adjacency[t.tail].push(t.head);
        }
    }
    let neighbors: Vec<Vec<(usize, usize)>> = adjacency
        .into_iter()
        .map(|mut ns| {
            ns.sort_unstable();
            ns.dedup();
            ns.into_iter().map(|w| (w, 0)).collect()
        })
        .collect();
    refine(&neighbors, &vec![0; n], max_rounds)
}

/// Relational refinement anchored at `head`: the head starts with its
/// own color, and each round adds the multiset of `(color, relation)`
/// over incoming edges `(w, r, u)`.
pub fn rawl2_refine(graph: &KnowledgeGraph, head: usize, max_rounds: usize) -> Result<PairColoring> {
    if head >= graph.num_entities() {
        return Err(Error::Contract(format!(
            "head {head} out of range for {} entities",
            graph.num_entities()
        )));
    }
    Ok(PairColoring {
        head,
        coloring: anchored(graph, &[head], max_rounds),
    })
}

fn anchored(graph: &KnowledgeGraph, heads: &[usize], max_rounds: usize) -> Coloring {
    let n = graph.num_entities();
    let neighbors: Vec<Vec<(usize, usize)>> = (0..n).map(|u| graph.incoming(u).collect()).collect();
    let mut init = vec![0; n];
    for &h in heads {
        init[h] = 1;
    }
    refine(&neighbors, &init, max_rounds)
}

fn base_triplets(graph: &KnowledgeGraph) -> impl Iterator<Item = Triplet> + '_ {
    graph
        .edges()
        .iter()
        .copied()
        .filter(move |t| !graph.is_augmented() || t.relation < graph.num_base_relations())
}

/// Disjoint union with `b`'s entities shifted past `a`'s.
pub fn disjoint_union(a: &KnowledgeGraph, b: &KnowledgeGraph) -> Result<KnowledgeGraph> {
    if a.is_augmented() != b.is_augmented() {
        return Err(Error::Graph("cannot join an inverse-augmented graph with a plain one".into()));
    }
    let shift = a.num_entities();
    let facts: Vec<Triplet> = base_triplets(a)
        .chain(base_triplets(b).map(|t| Triplet::new(t.head + shift, t.relation, t.tail + shift)))
        .collect();
    let nb = a.num_base_relations().max(b.num_base_relations());
    KnowledgeGraph::build(&facts, shift + b.num_entities(), nb, a.is_augmented())
}

fn same_histogram(colors: &[usize], split: usize) -> bool {
    let mut left = colors[..split].to_vec();
    let mut right = colors[split..].to_vec();
    left.sort_unstable();
    right.sort_unstable();
    left == right
}

/// Whether 1-WL fails to tell `a` and `b` apart.
pub fn wl_equivalent(a: &KnowledgeGraph, b: &KnowledgeGraph) -> Result<bool> {
    let u = disjoint_union(a, b)?;
    let c = wl_refine(&u, u.num_entities());
    Ok(same_histogram(&c.colors, a.num_entities()))
}

/// Whether the anchored refinement fails to tell `(a, head_a)` and
/// `(b, head_b)` apart.
pub fn rawl2_equivalent(a: &KnowledgeGraph, head_a: usize, b: &KnowledgeGraph, head_b: usize) -> Result<bool> {
    let u = disjoint_union(a, b)?;
    let c = anchored(&u, &[head_a, a.num_entities() + head_b], u.num_entities());
    Ok(same_histogram(&c.colors, a.num_entities()))
}

/// Agreement between refinement classes and model outputs for one query.
#[derive(Debug, Clone, Serialize)]
pub struct ProbeReport {
    pub coloring: PairColoring,
    pub scores: Vec<f64>,
    /// Same color but scores differing by more than the tolerance. The
    /// refinement bound says this never happens.
    pub violations: Vec<(usize, usize, f64)>,
    /// Different colors yet equal scores: allowed, but unusual for
    /// generic parameters.
    pub merged: Vec<(usize, usize)>,
    /// Last layer's value-encoder rows `Ẑ`.
    pub value_rows: Vec<Vec<f64>>,
}

/// Scores within this distance count as equal.
pub const PROBE_TOLERANCE: f64 = 1e-9;

/// Runs the model with zero noise and zero input features on
/// `(head, relation, ?)` and pairs its scores with the stable anchored
/// coloring.
pub fn expressivity_probe(graph: &KnowledgeGraph, head: usize, relation: usize, params: &ModelParams) -> Result<ProbeReport> {
    let coloring = rawl2_refine(graph, head, graph.num_entities())?;
    let edges = graph.message_edges();
    let (scores, state) = forward_on_edges(&edges, graph.num_entities(), head, relation, params, &Noise::Disabled)?;
    let colors = &coloring.coloring.colors;
    let mut violations = Vec::new();
    let mut merged = Vec::new();
    for u in 0..scores.len() {
        for v in u + 1..scores.len() {
            let diff = (scores[u] - scores[v]).abs();
            if colors[u] == colors[v] && diff > PROBE_TOLERANCE {
                violations.push((u, v, diff));
            } else if colors[u] != colors[v] && diff <= PROBE_TOLERANCE {
                merged.push((u, v));
            }
        }
    }
    let last = state.value_repr.last().expect("at least one layer");
    Ok(ProbeReport {
        coloring,
        scores,
        violations,
        merged,
        value_rows: (0..last.rows()).map(|r| last.row(r).to_vec()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use std::collections::hash_map::DefaultHasher;
    use std::collections::HashMap;
    use std::hash::{Hash, Hasher};

    fn graph(n: usize, nb: usize, facts: &[(usize, usize, usize)]) -> KnowledgeGraph {
        let ts: Vec<Triplet> = facts.iter().map(|&(h, r, t)| Triplet::new(h, r, t)).collect();
        KnowledgeGraph::build(&ts, n, nb, true).unwrap()
    }

    fn same_partition(a: &[usize], b: &[u64]) -> bool {
        let mut map = HashMap::new();
        let mut back = HashMap::new();
        a.iter().zip(b).all(|(x, y)| *map.entry(x).or_insert(y) == y && *back.entry(y).or_insert(x) == x)
    }

    /// Per-round colors by hashing `(old, sorted neighbor colors)`.
    fn hash_oracle(g: &KnowledgeGraph, rounds: usize) -> Vec<Vec<u64>> {
        let n = g.num_entities();
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for t in g.edges() {
            if t.head != t.tail {
                adj[t.head].push(t.tail);
                adj[t.tail].push(t.head);
            }
        }
        for a in &mut adj {
            a.sort_unstable();
            a.dedup();
        }
        let mut colors = vec![0u64; n];
        let mut out = Vec::new();
        for _ in 0..rounds {
            colors = (0..n)
                .map(|u| {
                    let mut ms: Vec<u64> = adj[u].iter().map(|&w| colors[w]).collect();
                    ms.sort_unstable();
                    let mut h = DefaultHasher::new();
                    (colors[u], ms).hash(&mut h);
                    h.finish()
                })
                .collect();
            out.push(colors.clone());
        }
        out
    }

    #[test]
    fn regular_graph_keeps_one_color() {
        let cycle = graph(5, 1, &[(0, 0, 1), (1, 0, 2), (2, 0, 3), (3, 0, 4), (4, 0, 0)]);
        let c = wl_refine(&cycle, 10);
        assert!(c.stable);
        assert_eq!(c.num_classes(), 1);
    }

    #[test]
    fn path_endpoints_share_a_color() {
        let path = graph(3, 1, &[(0, 0, 1), (1, 0, 2)]);
        let c = wl_refine(&path, 1);
        assert_eq!(c.colors[0], c.colors[2]);
        assert_ne!(c.colors[0], c.colors[1]);
    }

    #[test]
    fn matches_hash_oracle_on_random_graphs() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let n = rng.gen_range(1..10);
            let m = rng.gen_range(0..2 * n);
            let facts: Vec<_> = (0..m).map(|_| (rng.gen_range(0..n), 0, rng.gen_range(0..n))).collect();
            let g = graph(n, 1, &facts);
            let oracle = hash_oracle(&g, n);
            for (r, expected) in oracle.iter().enumerate() {
                let c = wl_refine(&g, r + 1);
                // Once stable the oracle keeps the same partition.
                assert!(same_partition(&c.colors, expected));
            }
        }
    }

    #[test]
    fn star_center_head_keeps_leaves_together() {
        let star = graph(5, 1, &[(0, 0, 1), (0, 0, 2), (0, 0, 3), (0, 0, 4)]);
        for rounds in 0..5 {
            let c = rawl2_refine(&star, 0, rounds).unwrap().coloring;
            assert!((2..5).all(|u| c.colors[u] == c.colors[1]));
        }
    }

    #[test]
    fn path_leaf_head_separates_everything_after_two_rounds() {
        let path = graph(3, 1, &[(0, 0, 1), (1, 0, 2)]);
        let c = rawl2_refine(&path, 0, 2).unwrap().coloring;
        assert_eq!(c.num_classes(), 3);
        let c1 = rawl2_refine(&path, 0, 1).unwrap().coloring;
        // Inverse edges make the two ends differ after a single round.
        assert_eq!(c1.num_classes(), 3);
    }

    #[test]
    fn relation_labels_break_wl_ties() {
        // Two 6-cycles with different relation patterns: identical as
        // simple graphs, different as relational ones.
        let alternating = graph(6, 2, &[(0, 0, 1), (1, 1, 2), (2, 0, 3), (3, 1, 4), (4, 0, 5), (5, 1, 0)]);
        let blocked = graph(6, 2, &[(0, 0, 1), (1, 0, 2), (2, 0, 3), (3, 1, 4), (4, 1, 5), (5, 1, 0)]);
        assert!(wl_equivalent(&alternating, &blocked).unwrap());
        assert!(!rawl2_equivalent(&alternating, 0, &blocked, 0).unwrap());
        assert!(rawl2_equivalent(&alternating, 0, &alternating, 2).unwrap());
    }

    #[test]
    fn refinement_only_splits() {
        let g = graph(7, 2, &[(0, 0, 1), (1, 1, 2), (2, 0, 3), (0, 1, 4), (4, 0, 5), (5, 1, 6)]);
        let mut prev = rawl2_refine(&g, 0, 0).unwrap().coloring;
        for r in 1..=7 {
            let next = rawl2_refine(&g, 0, r).unwrap().coloring;
            for u in 0..7 {
                for v in 0..7 {
                    if next.colors[u] == next.colors[v] {
                        assert_eq!(prev.colors[u], prev.colors[v]);
                    }
                }
            }
            prev = next;
        }
        assert!(rawl2_refine(&g, 0, 7).unwrap().coloring.stable);
    }

    #[test]
    fn probe_on_symmetric_twins() {
        // 1 and 2 are both reached from 0 by relation 0 and are swapped by
        // an automorphism fixing the head.
        let g = graph(4, 1, &[(0, 0, 1), (0, 0, 2), (1, 0, 3), (2, 0, 3)]);
        let cfg = ModelConfig {
            hidden_dim: 8,
            ..ModelConfig::default()
        };
        let mut p = ModelParams::init(&cfg, 2, 3).unwrap();
        p.perturb(0.1, 3);
        let report = expressivity_probe(&g, 0, 0, &p).unwrap();
        assert!(report.violations.is_empty());
        assert!((report.scores[1] - report.scores[2]).abs() <= PROBE_TOLERANCE);
        assert_eq!(report.coloring.coloring.colors[1], report.coloring.coloring.colors[2]);
    }

    #[test]
    fn single_entity_is_one_class() {
        let g = graph(1, 1, &[]);
        let cfg = ModelConfig {
            hidden_dim: 4,
            ..ModelConfig::default()
        };
        let p = ModelParams::init(&cfg, 2, 0).unwrap();
        let report = expressivity_probe(&g, 0, 1, &p).unwrap();
        assert_eq!(report.coloring.coloring.num_classes(), 1);
        assert_eq!(report.scores.len(), 1);
    }
}
