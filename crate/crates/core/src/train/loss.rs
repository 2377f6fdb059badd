//! Negative-sampling objective and negative sampling.

use rand::seq::index;
use rand::Rng;

use crate::autodiff::{NodeId, Tape};
use crate::error::{Error, Result};

/// Probabilities are clamped into `[PROB_CLAMP, 1 - PROB_CLAMP]` before
/// taking logs.
pub const PROB_CLAMP: f64 = 1e-7;

/// `-log σ(t) - Σ_{t'} log(1 - σ(t'))` over post-sigmoid `scores`.
pub fn negative_sampling_loss(scores: &[f64], gold_tail: usize, negatives: &[usize]) -> f64 {
    let clamp = |p: f64| p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    -clamp(scores[gold_tail]).ln() - negatives.iter().map(|&n| (1.0 - clamp(scores[n])).ln()).sum::<f64>()
}

/// Tape version of [`negative_sampling_loss`] over a `(1 + k) x 1`
/// column whose first row is the gold score and the rest negatives.
pub fn negative_sampling_loss_on_tape(tape: &mut Tape<'_>, scores: NodeId) -> Result<NodeId> {
    let n = tape.shape(scores)[0];
    if n == 0 {
        return Err(Error::Contract("loss needs at least the gold score".into()));
    }
    let clamped = tape.clamp(scores, PROB_CLAMP, 1.0 - PROB_CLAMP);
    let positive = tape.gather_rows(clamped, vec![0])?;
    let positive = tape.log(positive);
    let mut total = tape.sum(positive);
    if n > 1 {
        let negatives = tape.gather_rows(clamped, (1..n).collect::<Vec<_>>())?;
        let complement = tape.scale(negatives, -1.0);
        let complement = tape.add_scalar(complement, 1.0);
        let logs = tape.log(complement);
        let neg_sum = tape.sum(logs);
        total = tape.add(total, neg_sum)?;
    }
    Ok(tape.scale(total, -1.0))
}

/// `k` distinct entities drawn uniformly from `0..num_entities` minus
/// `gold_tail`.
pub fn sample_negatives<R: Rng + ?Sized>(
    gold_tail: usize,
    k: usize,
    num_entities: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let available = num_entities.saturating_sub(usize::from(gold_tail < num_entities));
    if k > available || k >= num_entities {
        return Err(Error::Sampling {
            requested: k,
            available,
        });
    }
    // Sample from a range with the gold id removed, then shift ids past it.
    Ok(index::sample(rng, available, k)
        .into_iter()
        .map(|i| if i >= gold_tail { i + 1 } else { i })
        .collect())
}
