//! Filtered link-prediction ranking and metrics.

mod evaluate;
mod metrics;
mod rank;

pub use evaluate::{evaluate, evaluate_target, score_all, EvalSplit, EvalTarget, Evaluation, RankingResult};
pub use metrics::{compute_metrics, mrr_spread, random_ranking_mrr, MetricsReport};
pub use rank::{rank_answer, rank_query};
