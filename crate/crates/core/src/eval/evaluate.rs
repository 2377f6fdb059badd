use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use super::metrics::{compute_metrics, MetricsReport};
use super::rank::rank_query;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::graph::{DatasetSplit, FilterSets, KnowledgeGraph, Query, SplitMode};
use crate::model::{forward_on_edges, ModelParams, Noise};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalSplit {
    Valid,
    Test,
}

impl FromStr for EvalSplit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "valid" => Ok(EvalSplit::Valid),
            "test" => Ok(EvalSplit::Test),
            other => Err(Error::Config(format!("unknown split `{other}` (expected valid or test)"))),
        }
    }
}

impl fmt::Display for EvalSplit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvalSplit::Valid => "valid",
            EvalSplit::Test => "test",
        })
    }
}

/// Everything needed to rank one split: the message-passing graph, the
/// queries in both directions and their filter sets.
#[derive(Debug, Clone)]
pub struct EvalTarget {
    pub split: EvalSplit,
    pub graph: KnowledgeGraph,
    pub queries: Vec<Query>,
}

impl EvalTarget {
    /// Transductive splits filter against train ∪ valid ∪ test on the
    /// training graph. Inductive validation uses the training graph and
    /// train ∪ valid; inductive test uses the inference graph and
    /// inference ∪ test.
    pub fn new(data: &DatasetSplit, split: EvalSplit) -> Result<Self> {
        let nb = data.num_base_relations();
        let triplets = match split {
            EvalSplit::Valid => &data.valid,
            EvalSplit::Test => &data.test,
        };
        let (graph, filter) = match (data.mode, split, &data.inference) {
            (SplitMode::Transductive, _, _) => (
                data.train_graph()?,
                FilterSets::build(&[&data.train, &data.valid, &data.test], Some(nb)),
            ),
            (SplitMode::Inductive, EvalSplit::Valid, _) => (
                data.train_graph()?,
                FilterSets::build(&[&data.train, &data.valid], Some(nb)),
            ),
            (SplitMode::Inductive, EvalSplit::Test, Some(inf)) => (
                data.test_graph()?,
                FilterSets::build(&[&inf.facts, &data.test], Some(nb)),
            ),
            (SplitMode::Inductive, EvalSplit::Test, None) => {
                return Err(Error::Contract("inductive split without inference facts".into()))
            }
        };
        let queries = filter.queries_both_directions(triplets, nb);
        Ok(Self { split, graph, queries })
    }
}

/// One query's outcome.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankingResult {
    pub head: usize,
    pub relation: usize,
    pub gold: usize,
    pub rank: f64,
    pub num_candidates: usize,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub rankings: Vec<RankingResult>,
}

/// Ranks every query's gold tail on `graph` with noise drawn once from
/// `noise_seed` and shared by all queries.
///
/// Queries run in parallel; results come back in query order.
pub fn evaluate(
    graph: &KnowledgeGraph,
    queries: &[Query],
    params: &ModelParams,
    noise: &Noise,
    filtered: bool,
) -> Result<Evaluation> {
    let n = graph.num_entities();
    let noise = Noise::Given(noise.materialize(n, params.hidden_dim())?);
    let edges = graph.message_edges();
    let rankings = queries
        .par_iter()
        .map(|q| {
            let (scores, _) = forward_on_edges(&edges, n, q.head, q.relation, params, &noise)?;
            let (rank, num_candidates) = rank_query(&scores, q, filtered)?;
            Ok(RankingResult {
                head: q.head,
                relation: q.relation,
                gold: q.gold_tail,
                rank,
                num_candidates,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let ranks: Vec<f64> = rankings.iter().map(|r| r.rank).collect();
    Ok(Evaluation {
        report: compute_metrics(&ranks, true)?,
        rankings,
    })
}

/// Shorthand for evaluating a prepared target.
pub fn evaluate_target(target: &EvalTarget, params: &ModelParams, noise: &Noise, filtered: bool) -> Result<Evaluation> {
    evaluate(&target.graph, &target.queries, params, noise, filtered)
}

/// Scores of every entity for `(head, relation, ?)` under a fixed noise
/// matrix.
pub fn score_all(graph: &KnowledgeGraph, head: usize, relation: usize, params: &ModelParams, noise: &Tensor) -> Result<Vec<f64>> {
    let edges = graph.message_edges();
    forward_on_edges(&edges, graph.num_entities(), head, relation, params, &Noise::Given(noise.clone())).map(|(s, _)| s)
}
