//! Filtered ranking with mean-rank tie handling.

use crate::error::{Error, Result};
use crate::graph::Query;

/// `1 + #{v : s_v > s_gold} + #{v ≠ gold : s_v = s_gold} / 2` over
/// entities not marked in `filter_mask`.
///
/// `filter_mask[v]` marks known true tails to exclude; the gold tail
/// itself must not be masked.
pub fn rank_answer(scores: &[f64], gold_tail: usize, filter_mask: &[bool]) -> Result<f64> {
    if gold_tail >= scores.len() || filter_mask.len() != scores.len() {
        return Err(Error::Contract(format!(
            "gold {gold_tail} with {} scores and a mask of {}",
            scores.len(),
            filter_mask.len()
        )));
    }
    if filter_mask[gold_tail] {
        return Err(Error::Contract(format!("gold tail {gold_tail} is filtered out")));
    }
    let gold = scores[gold_tail];
    let (mut higher, mut tied) = (0usize, 0usize);
    for (v, (&s, &masked)) in scores.iter().zip(filter_mask).enumerate() {
        if masked || v == gold_tail {
            continue;
        }
        if s > gold {
            higher += 1;
        } else if s == gold {
            tied += 1;
        }
    }
    Ok(1.0 + higher as f64 + tied as f64 / 2.0)
}

/// Rank of `query.gold_tail`, masking the other tails in its filter set
/// when `filtered`, plus the number of competing candidates.
pub fn rank_query(scores: &[f64], query: &Query, filtered: bool) -> Result<(f64, usize)> {
    let mut mask = vec![false; scores.len()];
    if filtered {
        for &v in &query.filter_set {
            if v != query.gold_tail && v < mask.len() {
                mask[v] = true;
            }
        }
    }
    let candidates = mask.iter().filter(|m| !**m).count();
    Ok((rank_answer(scores, query.gold_tail, &mask)?, candidates))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sort_oracle(scores: &[f64], gold: usize, mask: &[bool]) -> f64 {
        // Position range of the gold score among unmasked candidates
        // sorted descending; ties occupy a contiguous block whose mean
        // position is the rank.
        let mut pool: Vec<f64> = (0..scores.len())
            .filter(|&v| !mask[v] || v == gold)
            .map(|v| scores[v])
            .collect();
        pool.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let first = pool.iter().position(|&s| s == scores[gold]).unwrap() + 1;
        let last = pool.iter().rposition(|&s| s == scores[gold]).unwrap() + 1;
        (first + last) as f64 / 2.0
    }

    #[test]
    fn strictly_best_is_rank_one() {
        assert_eq!(rank_answer(&[0.1, 0.9, 0.3], 1, &[false; 3]).unwrap(), 1.0);
    }

    #[test]
    fn all_tied_five() {
        assert_eq!(rank_answer(&[0.5; 5], 2, &[false; 5]).unwrap(), 3.0);
    }

    #[test]
    fn masking_gold_is_an_error() {
        assert!(matches!(
            rank_answer(&[0.5, 0.2], 0, &[true, false]),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn filtered_query_ignores_other_answers() {
        let q = Query {
            head: 0,
            relation: 0,
            gold_tail: 2,
            filter_set: vec![1, 2],
        };
        let scores = [0.1, 0.9, 0.5, 0.2];
        assert_eq!(rank_query(&scores, &q, true).unwrap(), (1.0, 3));
        assert_eq!(rank_query(&scores, &q, false).unwrap(), (2.0, 4));
    }

    proptest! {
        #[test]
        fn matches_sort_oracle(
            scores in prop::collection::vec(0u8..8, 1..100),
            mask_bits in prop::collection::vec(any::<bool>(), 100),
            gold_seed in any::<usize>(),
        ) {
            let scores: Vec<f64> = scores.iter().map(|&s| f64::from(s) / 8.0).collect();
            let gold = gold_seed % scores.len();
            let mut mask = mask_bits[..scores.len()].to_vec();
            mask[gold] = false;
            prop_assert_eq!(rank_answer(&scores, gold, &mask).unwrap(), sort_oracle(&scores, gold, &mask));
        }

        #[test]
        fn filtering_never_increases_rank(
            scores in prop::collection::vec(0.0f64..1.0, 2..60),
            extra in any::<usize>(),
        ) {
            let gold = 0;
            let mut mask = vec![false; scores.len()];
            let before = rank_answer(&scores, gold, &mask).unwrap();
            mask[1 + extra % (scores.len() - 1)] = true;
            prop_assert!(rank_answer(&scores, gold, &mask).unwrap() <= before);
        }

        #[test]
        fn monotone_transform_preserves_rank(
            scores in prop::collection::vec(-3.0f64..3.0, 1..60),
            gold_seed in any::<usize>(),
        ) {
            let gold = gold_seed % scores.len();
            let mask = vec![false; scores.len()];
            let squashed: Vec<f64> = scores.iter().map(|&s| crate::autodiff::sigmoid(s)).collect();
            prop_assert_eq!(
                rank_answer(&scores, gold, &mask).unwrap(),
                rank_answer(&squashed, gold, &mask).unwrap()
            );
        }
    }
}
