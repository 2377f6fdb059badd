//! The transformer stack and output scorer.

use std::borrow::Cow;

use super::attention::{dense_attention, linear_attention, query_key};
use super::config::KernelMode;
use super::params::{AttentionLayerParams, ModelParams};
use super::rmpnn::{head_indicator, rmpnn_forward};
use crate::autodiff::{NodeId, Tape, Tensor};
use crate::error::{Error, Result};
use crate::graph::{KnowledgeGraph, MessageEdges};
use crate::rng;

/// Gaussian features appended to the query encoder's input.
#[derive(Debug, Clone)]
pub enum Noise {
    Disabled,
    /// `N(0, 1)` entries from the noise stream of this seed.
    Seeded(u64),
    Given(Tensor),
}

impl Noise {
    pub fn materialize(&self, num_entities: usize, dim: usize) -> Result<Tensor> {
        match self {
            Noise::Disabled => Ok(Tensor::zeros(num_entities, dim)),
            Noise::Seeded(seed) => {
                let mut rng = rng::stream(*seed, rng::NOISE, &[]);
                Ok(Tensor::randn(num_entities, dim, 1.0, &mut rng))
            }
            Noise::Given(t) if t.shape() == [num_entities, dim] => Ok(t.clone()),
            Noise::Given(t) => Err(Error::Shape {
                op: "noise",
                lhs: t.shape(),
                rhs: [num_entities, dim],
            }),
        }
    }
}

/// Node handles for one transformer layer.
#[derive(Debug, Clone, Copy)]
pub struct LayerNodes {
    /// Query-encoder output `Z̃`.
    pub query_repr: NodeId,
    /// Value-encoder output `Ẑ`.
    pub value_repr: NodeId,
    /// Attention output `Z̄`.
    pub attended: NodeId,
    pub output: NodeId,
}

#[derive(Debug, Clone)]
pub struct ForwardNodes {
    pub input: NodeId,
    pub layers: Vec<LayerNodes>,
    pub output: NodeId,
}

/// Materialized intermediate matrices of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardState {
    /// `X⁽⁰⁾ … X⁽ᴸ⁾`.
    pub entity_states: Vec<Tensor>,
    pub query_repr: Vec<Tensor>,
    pub value_repr: Vec<Tensor>,
    pub attended: Vec<Tensor>,
    pub noise: Tensor,
}

impl ForwardState {
    pub fn from_nodes(tape: &Tape<'_>, nodes: &ForwardNodes, noise: Tensor) -> Self {
        let mut entity_states = vec![tape.value(nodes.input).clone()];
        entity_states.extend(nodes.layers.iter().map(|l| tape.value(l.output).clone()));
        Self {
            entity_states,
            query_repr: nodes.layers.iter().map(|l| tape.value(l.query_repr).clone()).collect(),
            value_repr: nodes.layers.iter().map(|l| tape.value(l.value_repr).clone()).collect(),
            attended: nodes.layers.iter().map(|l| tape.value(l.attended).clone()).collect(),
            noise,
        }
    }
}

/// One query's view of the graph.
pub struct QueryContext<'a> {
    pub edges: &'a MessageEdges,
    pub num_entities: usize,
    pub head: usize,
    pub relation: usize,
    pub noise: NodeId,
    pub indicator: NodeId,
}

impl<'a> QueryContext<'a> {
    pub fn new(
        tape: &mut Tape<'_>,
        params: &ModelParams,
        edges: &'a MessageEdges,
        num_entities: usize,
        head: usize,
        relation: usize,
        noise: Tensor,
    ) -> Result<Self> {
        if head >= num_entities {
            return Err(Error::Contract(format!(
                "head {head} out of range for {num_entities} entities"
            )));
        }
        if relation >= params.num_relations {
            return Err(Error::Contract(format!(
                "relation {relation} out of range for {} relations",
                params.num_relations
            )));
        }
        let d = params.hidden_dim();
        let noise = tape.constant(noise);
        let indicator = tape.constant(head_indicator(num_entities, d, head));
        Ok(Self {
            edges,
            num_entities,
            head,
            relation,
            noise,
            indicator,
        })
    }
}

/// `A = LN₁(X + Attn(X)); X' = LN₂(A + FFN(A))`.
pub fn transformer_layer(
    tape: &mut Tape<'_>,
    params: &ModelParams,
    layer: &AttentionLayerParams,
    x: NodeId,
    relation_embeddings: NodeId,
    ctx: &QueryContext<'_>,
) -> Result<LayerNodes> {
    let cfg = &params.config;
    let query_repr = rmpnn_forward(tape, &layer.query, ctx.edges, x, ctx.noise, relation_embeddings, ctx.relation)?;
    let value_repr = rmpnn_forward(tape, &layer.value, ctx.edges, x, ctx.indicator, relation_embeddings, ctx.relation)?;
    let (q, k) = query_key(tape, layer, query_repr, cfg.normalize_eps)?;
    let attended = match cfg.kernel_mode {
        KernelMode::Approximate => linear_attention(tape, q, k, value_repr)?,
        KernelMode::FullExponential => dense_attention(tape, q, k, value_repr, KernelMode::FullExponential)?,
    };
    let residual = tape.add(x, attended)?;
    let a = layer.norm1.apply(tape, residual, cfg.layer_norm_eps)?;
    let ffn = layer.ffn.apply(tape, a)?;
    let residual = tape.add(a, ffn)?;
    let output = layer.norm2.apply(tape, residual, cfg.layer_norm_eps)?;
    Ok(LayerNodes {
        query_repr,
        value_repr,
        attended,
        output,
    })
}

/// Runs all layers from `X⁽⁰⁾ = 0`.
pub fn encode(tape: &mut Tape<'_>, params: &ModelParams, ctx: &QueryContext<'_>) -> Result<ForwardNodes> {
    let input = tape.constant(Tensor::zeros(ctx.num_entities, params.hidden_dim()));
    let relation_embeddings = tape.param(params.relation_embeddings);
    let mut x = input;
    let mut layers = Vec::with_capacity(params.layers.len());
    for layer in &params.layers {
        let nodes = transformer_layer(tape, params, layer, x, relation_embeddings, ctx)?;
        x = nodes.output;
        layers.push(nodes);
    }
    Ok(ForwardNodes {
        input,
        layers,
        output: x,
    })
}

/// `sigmoid(MLP(x))` for the selected rows (all rows when `rows` is `None`),
/// as a `k x 1` column.
pub fn score<'a>(
    tape: &mut Tape<'a>,
    params: &ModelParams,
    x: NodeId,
    rows: Option<Cow<'a, [usize]>>,
) -> Result<NodeId> {
    let x = match rows {
        Some(idx) => tape.gather_rows(x, idx)?,
        None => x,
    };
    let logits = params.scorer.apply(tape, x)?;
    Ok(tape.sigmoid(logits))
}

/// Scores of every entity as the tail of `(head, relation, ?)`.
pub fn forward(
    graph: &KnowledgeGraph,
    head: usize,
    relation: usize,
    params: &ModelParams,
    noise: &Noise,
) -> Result<Vec<f64>> {
    let edges = graph.message_edges();
    forward_on_edges(&edges, graph.num_entities(), head, relation, params, noise).map(|(s, _)| s)
}

/// Like [`forward`] but on explicit edges, also returning the
/// intermediate matrices.
pub fn forward_on_edges(
    edges: &MessageEdges,
    num_entities: usize,
    head: usize,
    relation: usize,
    params: &ModelParams,
    noise: &Noise,
) -> Result<(Vec<f64>, ForwardState)> {
    let noise = noise.materialize(num_entities, params.hidden_dim())?;
    let mut tape = Tape::new(&params.store);
    let ctx = QueryContext::new(&mut tape, params, edges, num_entities, head, relation, noise.clone())?;
    let nodes = encode(&mut tape, params, &ctx)?;
    let scores = score(&mut tape, params, nodes.output, None)?;
    let state = ForwardState::from_nodes(&tape, &nodes, noise);
    Ok((tape.value(scores).data().to_vec(), state))
}
