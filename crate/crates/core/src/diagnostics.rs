//! Numerical audits: kernel approximation error, runtime scaling,
//! attention inspection and gradient checking of the full model.

use std::time::Instant;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::autodiff::{grad_check, GradCheckReport, Tape, Tensor};
use crate::error::{Error, Result};
use crate::graph::{KnowledgeGraph, Triplet};
use crate::model::{
    approximate_kernel, dense_attention_oracle, encode, exponential_kernel, forward_on_edges, score, ModelParams, Noise, QueryContext, KERNEL_ERROR_BOUND, KERNEL_ERROR_SUP,
};
use crate::rng;
use crate::train::negative_sampling_loss_on_tape;

#[derive(Debug, Clone, Serialize)]
pub struct KernelSweep {
    pub samples: usize,
    pub dim: usize,
    pub max_error: f64,
    /// Cosine of the pair attaining `max_error`.
    pub worst_cosine: f64,
    pub sup: f64,
    pub bound: f64,
}

impl KernelSweep {
    pub fn within_bound(&self) -> bool {
        self.max_error <= self.bound
    }

    /// Whether the observed maximum is within `tol` of the analytic sup.
    pub fn reaches_sup(&self, tol: f64) -> bool {
        (self.max_error - self.sup).abs() <= tol
    }
}

fn unit<R: Rng>(dim: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// `max |κ_exp(q, k) - κ(q, k)|` over `samples` unit pairs.
///
/// A third of the pairs are independent uniform directions, a third are
/// `normalize(q + δ·noise)` and a third `normalize(-q + δ·noise)` with
/// `δ` log-uniform in `[1e-6, 1]`, so the extremes `<q, k> = ±1` are
/// approached.
pub fn kernel_error_sweep(samples: usize, dim: usize, seed: u64) -> Result<KernelSweep> {
    if dim < 2 {
        return Err(Error::Config("kernel sweep needs dim >= 2".into()));
    }
    let mut rng = rng::stream(seed, "kernel-sweep", &[]);
    let (mut max_error, mut worst_cosine) = (0.0f64, 0.0);
    for i in 0..samples {
        let q = unit(dim, &mut rng);
        let k = match i % 3 {
            0 => unit(dim, &mut rng),
            side => {
                let delta = 10f64.powf(rng.gen_range(-6.0..0.0));
                let sign = if side == 1 { 1.0 } else { -1.0 };
                let noise = unit(dim, &mut rng);
                let raw: Vec<f64> = q.iter().zip(&noise).map(|(a, b)| sign * a + delta * b).collect();
                let n = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
                raw.into_iter().map(|x| x / n).collect()
            }
        };
        let err = (exponential_kernel(&q, &k) - approximate_kernel(&q, &k)).abs();
        if err > max_error {
            max_error = err;
            worst_cosine = q.iter().zip(&k).map(|(a, b)| a * b).sum();
        }
    }
    Ok(KernelSweep {
        samples,
        dim,
        max_error,
        worst_cosine,
        sup: KERNEL_ERROR_SUP,
        bound: KERNEL_ERROR_BOUND,
    })
}

/// Least-squares fit of `y` on the given feature columns plus an
/// intercept; returns the coefficients (intercept first) and R².
pub fn least_squares(features: &[Vec<f64>], y: &[f64]) -> Result<(Vec<f64>, f64)> {
    let n = y.len();
    let p = features.len() + 1;
    if n < p || features.iter().any(|f| f.len() != n) {
        return Err(Error::Contract(format!("{n} observations cannot fit {p} coefficients")));
    }
    let row = |i: usize| -> Vec<f64> { std::iter::once(1.0).chain(features.iter().map(|f| f[i])).collect() };
    // Normal equations, solved by Gaussian elimination with pivoting.
    let mut a = vec![vec![0.0; p + 1]; p];
    for i in 0..n {
        let x = row(i);
        for r in 0..p {
            for c in 0..p {
                a[r][c] += x[r] * x[c];
            }
            a[r][p] += x[r] * y[i];
        }
    }
    for col in 0..p {
        let pivot = (col..p)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("nonempty range");
        a.swap(col, pivot);
        if a[col][col].abs() < 1e-300 {
            return Err(Error::Contract("singular design matrix".into()));
        }
        for r in 0..p {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..=p {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    let beta: Vec<f64> = (0..p).map(|r| a[r][p] / a[r][r]).collect();
    let mean = y.iter().sum::<f64>() / n as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let ss_res: f64 = (0..n)
        .map(|i| {
            let pred: f64 = row(i).iter().zip(&beta).map(|(x, b)| x * b).sum();
            (y[i] - pred).powi(2)
        })
        .sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok((beta, r2))
}

/// Directed chain `0 → 1 → … → n-1` over one relation, with inverses.
pub fn chain_graph(n: usize) -> Result<KnowledgeGraph> {
    let facts: Vec<Triplet> = (1..n).map(|i| Triplet::new(i - 1, 0, i)).collect();
    KnowledgeGraph::build(&facts, n, 1, true)
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingPoint {
    pub entities: usize,
    /// Fastest forward time in milliseconds.
    pub millis: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingReport {
    pub kernel_mode: String,
    pub points: Vec<ScalingPoint>,
    pub linear_r2: f64,
    /// R² with an added quadratic term.
    pub quadratic_r2: f64,
    /// Fitted quadratic coefficient, in ms per entity².
    pub quadratic_coefficient: f64,
}

/// Fastest forward time on chains of the given sizes with `params`.
///
/// Sizes are visited round-robin within each repeat so that bursts of
/// outside load hit every size alike; the minimum over repeats is kept
/// since interference only ever adds time.
pub fn scaling_benchmark(sizes: &[usize], params: &ModelParams, repeats: usize) -> Result<ScalingReport> {
    let mut setups = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let edges = chain_graph(n)?.message_edges();
        let noise = Noise::Given(Noise::Seeded(0).materialize(n, params.hidden_dim())?);
        setups.push((n, edges, noise));
    }
    let mut best = vec![f64::INFINITY; sizes.len()];
    for _ in 0..repeats.max(1) {
        for ((n, edges, noise), best) in setups.iter().zip(&mut best) {
            let start = Instant::now();
            forward_on_edges(edges, *n, 0, 0, params, noise)?;
            *best = best.min(start.elapsed().as_secs_f64() * 1e3);
        }
    }
    let points: Vec<ScalingPoint> = sizes
        .iter()
        .zip(best)
        .map(|(&entities, millis)| ScalingPoint { entities, millis })
        .collect();
    let x: Vec<f64> = points.iter().map(|p| p.entities as f64).collect();
    let y: Vec<f64> = points.iter().map(|p| p.millis).collect();
    let (_, linear_r2) = least_squares(std::slice::from_ref(&x), &y)?;
    let (quadratic_r2, quadratic_coefficient) = if points.len() > 3 {
        let sq: Vec<f64> = x.iter().map(|v| v * v).collect();
        let (beta, r2) = least_squares(&[x, sq], &y)?;
        (r2, beta[2])
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(ScalingReport {
        kernel_mode: params.config.kernel_mode.to_string(),
        points,
        linear_r2,
        quadratic_r2,
        quadratic_coefficient,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct AttentionTarget {
    pub layer: usize,
    pub entity: usize,
    /// `(entity, weight)` in decreasing weight order.
    pub top: Vec<(usize, f64)>,
}

/// For each of `entities`, the `k` entities it attends to most in every
/// layer, from the dense oracle. Small graphs only.
pub fn attention_top_k(
    graph: &KnowledgeGraph,
    head: usize,
    relation: usize,
    params: &ModelParams,
    noise: &Noise,
    entities: &[usize],
    k: usize,
) -> Result<Vec<AttentionTarget>> {
    let n = graph.num_entities();
    if let Some(&bad) = entities.iter().find(|&&e| e >= n) {
        return Err(Error::Contract(format!("entity {bad} out of range for {n} entities")));
    }
    let edges = graph.message_edges();
    let (_, state) = forward_on_edges(&edges, n, head, relation, params, noise)?;
    let mode = params.config.kernel_mode;
    let mut out = Vec::new();
    for (l, layer) in params.layers.iter().enumerate() {
        let (_, attn) = dense_attention_oracle(
            &state.query_repr[l],
            &state.value_repr[l],
            layer,
            &params.store,
            mode,
            params.config.normalize_eps,
        )?;
        for &e in entities {
            let mut row: Vec<(usize, f64)> = attn.row(e).iter().copied().enumerate().collect();
            row.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            row.truncate(k);
            out.push(AttentionTarget {
                layer: l,
                entity: e,
                top: row,
            });
        }
    }
    Ok(out)
}

/// Finite-difference audit of the training loss of one query against
/// fixed negatives and fixed noise, over every parameter.
pub fn model_gradcheck(
    graph: &KnowledgeGraph,
    params: &ModelParams,
    query: Triplet,
    negatives: &[usize],
    noise: &Tensor,
    step: f64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    let n = graph.num_entities();
    let edges = graph.message_edges();
    let mut rows = vec![query.tail];
    rows.extend_from_slice(negatives);
    grad_check(
        &params.store,
        |tape: &mut Tape<'_>| {
            let ctx = QueryContext::new(tape, params, &edges, n, query.head, query.relation, noise.clone())?;
            let nodes = encode(tape, params, &ctx)?;
            let s = score(tape, params, nodes.output, Some(rows.clone().into()))?;
            negative_sampling_loss_on_tape(tape, s)
        },
        step,
        tolerance,
        None,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_hits_the_supremum() {
        let s = kernel_error_sweep(30_000, 16, 1).unwrap();
        assert!(s.within_bound());
        assert!(s.reaches_sup(1e-3), "{s:?}");
        assert!(s.worst_cosine > 0.999);
    }

    #[test]
    fn least_squares_recovers_exact_line() {
        let x = vec![1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 + 2.0 * v).collect();
        let (beta, r2) = least_squares(&[x], &y).unwrap();
        assert!((beta[0] - 3.0).abs() < 1e-9 && (beta[1] - 2.0).abs() < 1e-9);
        assert!((r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn least_squares_on_a_parabola() {
        let x: Vec<f64> = (1..=6).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| v * v).collect();
        let sq: Vec<f64> = x.iter().map(|v| v * v).collect();
        let (_, lin) = least_squares(std::slice::from_ref(&x), &y).unwrap();
        let (beta, quad) = least_squares(&[x, sq], &y).unwrap();
        assert!(lin < 1.0);
        assert!((quad - 1.0).abs() < 1e-9);
        assert!((beta[2] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn chain_has_expected_edges() {
        let g = chain_graph(4).unwrap();
        assert_eq!(g.num_edges(), 6);
        assert_eq!(g.in_degree(0), 1);
        assert_eq!(g.in_degree(1), 2);
    }
}
