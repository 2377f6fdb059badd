use std::collections::{BTreeSet, HashMap};

use super::kg::Triplet;

/// Known true tails per `(head, relation)`, used to mask other correct
/// answers during filtered ranking.
#[derive(Debug, Clone, Default)]
pub struct FilterSets {
    tails: HashMap<(usize, usize), BTreeSet<usize>>,
}

impl FilterSets {
    /// Union of all tails over `splits`. With `inverse_offset = Some(nb)`
    /// each `(h, r, t)` also records `t` under `(t, r + nb) -> h`.
    pub fn build(splits: &[&[Triplet]], inverse_offset: Option<usize>) -> Self {
        let mut tails: HashMap<(usize, usize), BTreeSet<usize>> = HashMap::new();
        for split in splits {
            for t in split.iter() {
                tails.entry((t.head, t.relation)).or_default().insert(t.tail);
                if let Some(nb) = inverse_offset {
                    tails.entry((t.tail, t.relation + nb)).or_default().insert(t.head);
                }
            }
        }
        Self { tails }
    }

    pub fn get(&self, head: usize, relation: usize) -> Option<&BTreeSet<usize>> {
        self.tails.get(&(head, relation))
    }

    pub fn len(&self) -> usize {
        self.tails.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tails.is_empty()
    }

    /// Sum of set sizes, i.e. the number of distinct recorded triplets.
    pub fn total_entries(&self) -> usize {
        self.tails.values().map(BTreeSet::len).sum()
    }

    /// The query `(head, relation, ?)` with gold answer `gold_tail`.
    pub fn query(&self, head: usize, relation: usize, gold_tail: usize) -> Query {
        let mut filter: Vec<usize> = self
            .get(head, relation)
            .map(|s| s.iter().copied().collect())
            .unwrap_or_default();
        if let Err(pos) = filter.binary_search(&gold_tail) {
            filter.insert(pos, gold_tail);
        }
        Query {
            head,
            relation,
            gold_tail,
            filter_set: filter,
        }
    }

    /// Both directions of every triplet: `(h, r, ?)` and `(t, r + nb, ?)`.
    pub fn queries_both_directions(&self, triplets: &[Triplet], num_base_relations: usize) -> Vec<Query> {
        triplets
            .iter()
            .flat_map(|t| {
                [
                    self.query(t.head, t.relation, t.tail),
                    self.query(t.tail, t.relation + num_base_relations, t.head),
                ]
            })
            .collect()
    }
}

/// A tail-prediction query `(head, relation, ?)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub head: usize,
    pub relation: usize,
    pub gold_tail: usize,
    /// Sorted known-true tails, always containing `gold_tail`.
    pub filter_set: Vec<usize>,
}

impl Query {
    pub fn as_triplet(&self) -> Triplet {
        Triplet::new(self.head, self.relation, self.gold_tail)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn union_over_splits() {
        let train = [Triplet::new(0, 0, 1), Triplet::new(0, 0, 2)];
        let test = [Triplet::new(0, 0, 3)];
        let f = FilterSets::build(&[&train, &test], None);
        assert_eq!(f.get(0, 0).unwrap().iter().copied().collect::<Vec<_>>(), vec![1, 2, 3]);
    }

    #[test]
    fn disjoint_keys_give_singletons() {
        let ts = [Triplet::new(0, 0, 1), Triplet::new(1, 0, 2), Triplet::new(0, 1, 2)];
        let f = FilterSets::build(&[&ts], None);
        assert_eq!(f.len(), 3);
        assert!(f.tails.values().all(|s| s.len() == 1));
    }

    #[test]
    fn inverse_entries_and_query_contains_gold() {
        let ts = [Triplet::new(0, 0, 1)];
        let f = FilterSets::build(&[&ts], Some(1));
        assert!(f.get(1, 1).unwrap().contains(&0));
        let q = f.query(5, 0, 4);
        assert_eq!(q.filter_set, vec![4]);
    }
}
