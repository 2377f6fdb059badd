//! Relational message passing for the query and value encoders.
//!
//! Layer `l` updates every entity as
//! `z_u ← MLP_l(retain_l ⊙ z_u + Σ_{r(v,u)} z_v ⊙ (R[r_q] W_r + b_r))`,
//! with the gather → [`relational_message`] → scatter-add chain fused
//! into [`Tape::edge_product_sum`](crate::autodiff::Tape::edge_product_sum).

use super::params::RmpnnParams;
use crate::autodiff::{NodeId, Tape, Tensor};
use crate::error::Result;
use crate::graph::MessageEdges;

/// All relation transforms `R[r_q] · W_r + b_r`, stacked as `|R| x d`.
pub fn relation_transforms(
    tape: &mut Tape<'_>,
    encoder: &RmpnnParams,
    relation_embeddings: NodeId,
    query_relation: usize,
) -> Result<NodeId> {
    let bias = tape.param(encoder.relation_bias);
    let [num_relations, d] = tape.shape(bias);
    let weight = tape.param(encoder.relation_weight);
    let q = tape.gather_rows(relation_embeddings, vec![query_relation])?;
    let stacked = tape.matmul(q, weight)?;
    let per_relation = tape.reshape(stacked, num_relations, d)?;
    tape.add(per_relation, bias)
}

/// DistMult-style message `z_v ⊙ r̂` for a batch of source rows.
pub fn relational_message(tape: &mut Tape<'_>, sources: NodeId, transforms: NodeId) -> Result<NodeId> {
    tape.mul(sources, transforms)
}

/// Runs one encoder from its layer-0 input `[x, extra]` and returns
/// the final `|V| x d` representations.
pub fn rmpnn_forward(
    tape: &mut Tape<'_>,
    encoder: &RmpnnParams,
    edges: &MessageEdges,
    x: NodeId,
    extra: NodeId,
    relation_embeddings: NodeId,
    query_relation: usize,
) -> Result<NodeId> {
    let num_entities = tape.shape(x)[0];
    let init = tape.concat_columns(x, extra)?;
    let mut z = encoder.input.apply(tape, init)?;
    let transforms = relation_transforms(tape, encoder, relation_embeddings, query_relation)?;
    for (retain, update) in encoder.retain.iter().zip(&encoder.update) {
        let aggregated = tape.edge_product_sum(
            num_entities,
            z,
            transforms,
            edges.src.clone(),
            edges.rel.clone(),
            edges.dst.clone(),
        )?;
        let retain = tape.param(*retain);
        let kept = tape.mul(z, retain)?;
        let combined = tape.add(kept, aggregated)?;
        z = update.apply(tape, combined)?;
    }
    Ok(z)
}

/// Value-encoder labeling: all-ones row for the head, zeros elsewhere.
pub fn head_indicator(num_entities: usize, dim: usize, head: usize) -> Tensor {
    let mut t = Tensor::zeros(num_entities, dim);
    if head < num_entities {
        t.row_mut(head).fill(1.0);
    }
    t
}
