//! Kernel attention over all entities.
//!
//! With unit rows `q_u`, `k_v` and values `V`, every entity attends to
//! every other with weight `κ(q_u, k_v)` plus a self term of weight
//! `|V|`:
//!
//! ```text
//! z̄_u = (Σ_v κ(q_u, k_v) V_v + |V| V_u) / (Σ_v κ(q_u, k_v) + |V|)
//! ```
//!
//! For `κ = 1 + <q, k>` this factorizes as
//! `D⁻¹ [V + (1ᵀV + Q (Kᵀ V)) / |V|]` with `D = diag(2 + Q (Kᵀ 1) / |V|)`,
//! which [`linear_attention`] evaluates in `O(|V| d²)`. The dense forms
//! materialize the `|V| x |V|` kernel matrix.

use super::config::{KernelMode, DENSE_ENTITY_LIMIT};
use super::kernel;
use super::params::AttentionLayerParams;
use crate::autodiff::{NodeId, ParamStore, Tape, Tensor};
use crate::error::{Error, Result};

/// Unit-row queries and keys `rownorm(Z̃ W₁ + b₁)`, `rownorm(Z̃ W₂ + b₂)`.
pub fn query_key(
    tape: &mut Tape<'_>,
    layer: &AttentionLayerParams,
    query_repr: NodeId,
    eps: f64,
) -> Result<(NodeId, NodeId)> {
    let q = layer.w1.apply(tape, query_repr)?;
    let q = tape.row_l2_normalize(q, eps);
    let k = layer.w2.apply(tape, query_repr)?;
    let k = tape.row_l2_normalize(k, eps);
    Ok((q, k))
}

/// Linear-time attention with the approximate kernel.
pub fn linear_attention(tape: &mut Tape<'_>, q: NodeId, k: NodeId, v: NodeId) -> Result<NodeId> {
    let n = tape.shape(v)[0];
    if n == 0 {
        let d = tape.shape(v)[1];
        return Ok(tape.constant(Tensor::zeros(0, d)));
    }
    let inv_n = 1.0 / n as f64;
    // Kᵀ1 / n, then Q(Kᵀ1)/n.
    let key_mean = tape.mean_rows(k);
    let qk = tape.matmul_nt(q, key_mean)?;
    let denom = tape.add_scalar(qk, 2.0);
    // 1ᵀV / n and Q(KᵀV)/n.
    let value_mean = tape.mean_rows(v);
    let kv = tape.matmul_tn(k, v)?;
    let qkv = tape.matmul(q, kv)?;
    let qkv = tape.scale(qkv, inv_n);
    let numer = tape.add(v, qkv)?;
    let numer = tape.add(numer, value_mean)?;
    tape.div(numer, denom)
}

/// Quadratic-time attention with either kernel; differentiable.
pub fn dense_attention(
    tape: &mut Tape<'_>,
    q: NodeId,
    k: NodeId,
    v: NodeId,
    mode: KernelMode,
) -> Result<NodeId> {
    let n = tape.shape(v)[0];
    if n > DENSE_ENTITY_LIMIT {
        return Err(Error::OracleScope {
            entities: n,
            limit: DENSE_ENTITY_LIMIT,
        });
    }
    let scores = tape.matmul_nt(q, k)?;
    let kappa = match mode {
        KernelMode::Approximate => tape.add_scalar(scores, 1.0),
        KernelMode::FullExponential => tape.exp(scores),
    };
    let weighted = tape.matmul(kappa, v)?;
    let self_term = tape.scale(v, n as f64);
    let numer = tape.add(weighted, self_term)?;
    let mass = tape.row_sums(kappa);
    let denom = tape.add_scalar(mass, n as f64);
    tape.div(numer, denom)
}

fn unit_rows(z: &Tensor, weight: &Tensor, bias: &Tensor, eps: f64) -> Result<Tensor> {
    let mut out = z.matmul(weight)?;
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        for (x, b) in row.iter_mut().zip(bias.data()) {
            *x += b;
        }
        let norm = (row.iter().map(|x| x * x).sum::<f64>() + eps).sqrt();
        row.iter_mut().for_each(|x| *x /= norm);
    }
    Ok(out)
}

/// Reference attention computed entry by entry.
///
/// Returns the attended values and the explicit row-stochastic
/// attention matrix `A[u][v] = (κ(q_u, k_v) + |V|·[u = v]) / Σ_w (…)`.
/// Refuses graphs above [`DENSE_ENTITY_LIMIT`] entities.
pub fn dense_attention_oracle(
    query_repr: &Tensor,
    value_repr: &Tensor,
    layer: &AttentionLayerParams,
    store: &ParamStore,
    mode: KernelMode,
    eps: f64,
) -> Result<(Tensor, Tensor)> {
    let n = query_repr.rows();
    if n > DENSE_ENTITY_LIMIT {
        return Err(Error::OracleScope {
            entities: n,
            limit: DENSE_ENTITY_LIMIT,
        });
    }
    let q = unit_rows(query_repr, store.value(layer.w1.weight), store.value(layer.w1.bias), eps)?;
    let k = unit_rows(query_repr, store.value(layer.w2.weight), store.value(layer.w2.bias), eps)?;
    let mut attention = Tensor::zeros(n, n);
    for u in 0..n {
        let mut total = 0.0;
        for v in 0..n {
            let mut w = kernel::kernel(mode, q.row(u), k.row(v));
            if u == v {
                w += n as f64;
            }
            attention.set(u, v, w);
            total += w;
        }
        attention.row_mut(u).iter_mut().for_each(|w| *w /= total);
    }
    let attended = attention.matmul(value_repr)?;
    Ok((attended, attention))
}
