use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triplet {
    pub head: usize,
    pub relation: usize,
    pub tail: usize,
}

impl Triplet {
    pub const fn new(head: usize, relation: usize, tail: usize) -> Self {
        Self {
            head,
            relation,
            tail,
        }
    }
}

/// Edge arrays consumed by message passing: edge `k` carries a message
/// from `src[k]` to `dst[k]` under relation `rel[k]`.
///
/// The arrays are shared, so cloning is cheap and a tape can hold on to
/// them without borrowing the graph.
#[derive(Debug, Clone)]
pub struct MessageEdges {
    pub src: Arc<[usize]>,
    pub rel: Arc<[usize]>,
    pub dst: Arc<[usize]>,
}

impl MessageEdges {
    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }
}

/// Immutable multi-relational graph with a CSR index of incoming edges.
///
/// Duplicate triplets are kept: the graph is a multigraph and every copy
/// contributes its own message.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    num_entities: usize,
    num_base_relations: usize,
    num_relations: usize,
    edges: Vec<Triplet>,
    /// `offsets[u]..offsets[u + 1]` indexes the incoming edges of `u`.
    offsets: Vec<usize>,
    in_src: Arc<[usize]>,
    in_rel: Arc<[usize]>,
    in_dst: Arc<[usize]>,
}

impl KnowledgeGraph {
    /// Builds the graph. With `add_inverse`, every base edge `(h, r, t)`
    /// is accompanied by `(t, r + num_base_relations, h)`.
    ///
    /// Input relations must be base relations, so an edge list that was
    /// already augmented is rejected.
    pub fn build(
        triplets: &[Triplet],
        num_entities: usize,
        num_base_relations: usize,
        add_inverse: bool,
    ) -> Result<Self> {
        for (i, t) in triplets.iter().enumerate() {
            if t.head >= num_entities || t.tail >= num_entities {
                return Err(Error::Graph(format!(
                    "triplet {i} {t:?}: entity id out of range (num_entities = {num_entities})"
                )));
            }
            if t.relation >= num_base_relations {
                return Err(Error::Graph(format!(
                    "triplet {i} {t:?}: relation id out of range (num_base_relations = {num_base_relations})"
                )));
            }
        }
        let mut edges = triplets.to_vec();
        if add_inverse {
            edges.extend(
                triplets
                    .iter()
                    .map(|t| Triplet::new(t.tail, t.relation + num_base_relations, t.head)),
            );
        }
        let num_relations = if add_inverse {
            2 * num_base_relations
        } else {
            num_base_relations
        };

        let mut order: Vec<usize> = (0..edges.len()).collect();
        order.sort_by_key(|&e| (edges[e].tail, edges[e].relation, edges[e].head, e));
        let mut offsets = vec![0usize; num_entities + 1];
        for e in &edges {
            offsets[e.tail + 1] += 1;
        }
        for u in 0..num_entities {
            offsets[u + 1] += offsets[u];
        }
        let in_src = order.iter().map(|&e| edges[e].head).collect();
        let in_rel = order.iter().map(|&e| edges[e].relation).collect();
        let in_dst = order.iter().map(|&e| edges[e].tail).collect();

        Ok(Self {
            num_entities,
            num_base_relations,
            num_relations,
            edges,
            offsets,
            in_src,
            in_rel,
            in_dst,
        })
    }

    pub fn num_entities(&self) -> usize {
        self.num_entities
    }

    pub fn num_base_relations(&self) -> usize {
        self.num_base_relations
    }

    pub fn num_relations(&self) -> usize {
        self.num_relations
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Triplet] {
        &self.edges
    }

    pub fn is_augmented(&self) -> bool {
        self.num_relations == 2 * self.num_base_relations && self.num_base_relations > 0
    }

    /// Inverse of an augmented relation id.
    pub fn inverse_relation(&self, r: usize) -> usize {
        if r < self.num_base_relations {
            r + self.num_base_relations
        } else {
            r - self.num_base_relations
        }
    }

    /// `(source, relation)` pairs of every edge into `u`, sorted by
    /// `(relation, source)`.
    pub fn incoming(&self, u: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let range = self.offsets[u]..self.offsets[u + 1];
        self.in_src[range.clone()]
            .iter()
            .copied()
            .zip(self.in_rel[range].iter().copied())
    }

    pub fn in_degree(&self, u: usize) -> usize {
        self.offsets[u + 1] - self.offsets[u]
    }

    /// All edges, in CSR order.
    pub fn message_edges(&self) -> MessageEdges {
        MessageEdges {
            src: Arc::clone(&self.in_src),
            rel: Arc::clone(&self.in_rel),
            dst: Arc::clone(&self.in_dst),
        }
    }

    /// All edges except every copy of each listed triplet.
    pub fn message_edges_without(&self, removed: &[Triplet]) -> MessageEdges {
        let mut skip = Vec::new();
        for t in removed {
            if t.tail >= self.num_entities {
                continue;
            }
            let hi = self.offsets[t.tail + 1];
            let key = |k: usize| (self.in_rel[k], self.in_src[k]);
            let target = (t.relation, t.head);
            // Incoming lists are sorted by (relation, source).
            let (mut a, mut b) = (self.offsets[t.tail], hi);
            while a < b {
                let m = (a + b) / 2;
                if key(m) < target {
                    a = m + 1;
                } else {
                    b = m;
                }
            }
            let mut k = a;
            while k < hi && key(k) == target {
                skip.push(k);
                k += 1;
            }
        }
        if skip.is_empty() {
            return self.message_edges();
        }
        skip.sort_unstable();
        skip.dedup();
        let keep = self.in_src.len() - skip.len();
        let (mut src, mut rel, mut dst) = (
            Vec::with_capacity(keep),
            Vec::with_capacity(keep),
            Vec::with_capacity(keep),
        );
        let mut next = skip.iter().peekable();
        for k in 0..self.in_src.len() {
            if next.peek() == Some(&&k) {
                next.next();
                continue;
            }
            src.push(self.in_src[k]);
            rel.push(self.in_rel[k]);
            dst.push(self.in_dst[k]);
        }
        MessageEdges {
            src: src.into(),
            rel: rel.into(),
            dst: dst.into(),
        }
    }

    /// The graph with entity `u` renamed to `perm[u]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let base: Vec<Triplet> = self
            .edges
            .iter()
            .filter(|t| t.relation < self.num_base_relations)
            .map(|t| Triplet::new(perm[t.head], t.relation, perm[t.tail]))
            .collect();
        if self.is_augmented() {
            Self::build(&base, self.num_entities, self.num_base_relations, true)
        } else {
            Self::build(&base, self.num_entities, self.num_base_relations, false)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_edge_with_inverse() {
        let g = KnowledgeGraph::build(&[Triplet::new(0, 0, 1)], 2, 1, true).unwrap();
        assert_eq!(g.edges(), &[Triplet::new(0, 0, 1), Triplet::new(1, 1, 0)]);
        assert_eq!(g.num_relations(), 2);
        assert_eq!(g.incoming(1).collect::<Vec<_>>(), vec![(0, 0)]);
        assert_eq!(g.incoming(0).collect::<Vec<_>>(), vec![(1, 1)]);
    }

    #[test]
    fn duplicates_are_preserved() {
        let t = Triplet::new(0, 0, 1);
        let g = KnowledgeGraph::build(&[t, t], 2, 1, true).unwrap();
        assert_eq!(g.num_edges(), 4);
        assert_eq!(g.in_degree(1), 2);
    }

    #[test]
    fn out_of_range_ids_rejected() {
        assert!(KnowledgeGraph::build(&[Triplet::new(0, 0, 2)], 2, 1, true).is_err());
        assert!(KnowledgeGraph::build(&[Triplet::new(0, 1, 1)], 2, 1, true).is_err());
    }

    #[test]
    fn augmenting_twice_is_rejected() {
        let g = KnowledgeGraph::build(&[Triplet::new(0, 0, 1)], 2, 1, true).unwrap();
        let err = KnowledgeGraph::build(g.edges(), 2, 1, true).unwrap_err();
        assert!(err.to_string().contains("relation id out of range"));
    }

    #[test]
    fn incoming_sorted_by_relation_then_source() {
        let ts = [
            Triplet::new(3, 1, 0),
            Triplet::new(2, 0, 0),
            Triplet::new(1, 1, 0),
            Triplet::new(4, 0, 0),
        ];
        let g = KnowledgeGraph::build(&ts, 5, 2, false).unwrap();
        assert_eq!(
            g.incoming(0).collect::<Vec<_>>(),
            vec![(2, 0), (4, 0), (1, 1), (3, 1)]
        );
    }

    #[test]
    fn removing_query_edges() {
        let ts = [Triplet::new(0, 0, 1), Triplet::new(0, 0, 1), Triplet::new(1, 0, 2)];
        let g = KnowledgeGraph::build(&ts, 3, 1, true).unwrap();
        let e = g.message_edges_without(&[Triplet::new(0, 0, 1), Triplet::new(1, 1, 0)]);
        assert_eq!(e.len(), 2);
        let kept: Vec<_> = (0..e.len()).map(|k| (e.src[k], e.rel[k], e.dst[k])).collect();
        assert!(kept.contains(&(1, 0, 2)));
        assert!(kept.contains(&(2, 1, 1)));
    }
}
