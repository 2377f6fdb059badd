//! Learnable state of the model, laid out over a [`ParamStore`].

use rand::Rng;

use super::config::ModelConfig;
use crate::autodiff::{NodeId, ParamId, ParamStore, Tape, Tensor};
use crate::error::Result;
use crate::rng;

/// Affine map `x · weight + bias` with `weight: in x out`, `bias: 1 x out`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    fn new<R: Rng>(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, rng: &mut R) -> Result<Self> {
        let std = 1.0 / (fan_in as f64).sqrt();
        Ok(Self {
            weight: store.register(format!("{name}.weight"), Tensor::randn(fan_in, fan_out, std, rng))?,
            bias: store.register(format!("{name}.bias"), Tensor::zeros(1, fan_out))?,
        })
    }

    pub fn apply(&self, tape: &mut Tape<'_>, x: NodeId) -> Result<NodeId> {
        let w = tape.param(self.weight);
        let b = tape.param(self.bias);
        let xw = tape.matmul(x, w)?;
        tape.add(xw, b)
    }
}

/// Stack of [`Linear`] layers with ReLU between them (none after the last).
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    fn new<R: Rng>(store: &mut ParamStore, name: &str, widths: &[usize], rng: &mut R) -> Result<Self> {
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(store, &format!("{name}.{i}"), w[0], w[1], rng))
            .collect::<Result<_>>()?;
        Ok(Self { layers })
    }

    pub fn apply(&self, tape: &mut Tape<'_>, mut x: NodeId) -> Result<NodeId> {
        for (i, layer) in self.layers.iter().enumerate() {
            if i > 0 {
                x = tape.relu(x);
            }
            x = layer.apply(tape, x)?;
        }
        Ok(x)
    }
}

#[derive(Debug, Clone)]
pub struct LayerNormParams {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNormParams {
    fn new(store: &mut ParamStore, name: &str, dim: usize) -> Result<Self> {
        Ok(Self {
            gain: store.register(format!("{name}.gain"), Tensor::ones(1, dim))?,
            bias: store.register(format!("{name}.bias"), Tensor::zeros(1, dim))?,
        })
    }

    pub fn apply(&self, tape: &mut Tape<'_>, x: NodeId, eps: f64) -> Result<NodeId> {
        let g = tape.param(self.gain);
        let b = tape.param(self.bias);
        tape.layer_norm(x, g, b, eps)
    }
}

/// Parameters of one relational message-passing encoder.
///
/// The per-relation projections are shared by all of the encoder's
/// layers; `relation_weight` stores every `W_r` side by side as a
/// `d x (|R| d)` matrix so one product yields all relation transforms.
#[derive(Debug, Clone)]
pub struct RmpnnParams {
    pub input: Linear,
    pub relation_weight: ParamId,
    pub relation_bias: ParamId,
    pub retain: Vec<ParamId>,
    pub update: Vec<Mlp>,
}

impl RmpnnParams {
    fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        cfg: &ModelConfig,
        layers: usize,
        num_relations: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let d = cfg.hidden_dim;
        let std = 1.0 / (d as f64).sqrt();
        let input = Linear::new(store, &format!("{name}.input"), 2 * d, d, rng)?;
        let relation_weight = store.register(
            format!("{name}.relations.weight"),
            Tensor::randn(d, num_relations * d, std, rng),
        )?;
        let relation_bias = store.register(format!("{name}.relations.bias"), Tensor::zeros(num_relations, d))?;
        let mut retain = Vec::with_capacity(layers);
        let mut update = Vec::with_capacity(layers);
        let widths = vec![d; cfg.mlp_depth + 1];
        for l in 0..layers {
            retain.push(store.register(format!("{name}.retain.{l}"), Tensor::ones(1, d))?);
            update.push(Mlp::new(store, &format!("{name}.update.{l}"), &widths, rng)?);
        }
        Ok(Self {
            input,
            relation_weight,
            relation_bias,
            retain,
            update,
        })
    }

    pub fn num_layers(&self) -> usize {
        self.update.len()
    }
}

#[derive(Debug, Clone)]
pub struct AttentionLayerParams {
    pub query: RmpnnParams,
    pub value: RmpnnParams,
    pub w1: Linear,
    pub w2: Linear,
    pub norm1: LayerNormParams,
    pub norm2: LayerNormParams,
    pub ffn: Mlp,
}

/// All learnable tensors plus the structural handles into them.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub num_relations: usize,
    pub store: ParamStore,
    pub relation_embeddings: ParamId,
    pub layers: Vec<AttentionLayerParams>,
    pub scorer: Mlp,
}

impl ModelParams {
    /// Random initialization from the `init` stream of `seed`.
    ///
    /// Weights are `N(0, 1/fan_in)`, relation embeddings `N(0, 1/d)`,
    /// biases zero, retain vectors and LayerNorm gains one.
    pub fn init(config: &ModelConfig, num_relations: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = rng::stream(seed, rng::INIT, &[]);
        let d = config.hidden_dim;
        let mut store = ParamStore::new();
        let relation_embeddings = store.register(
            "relation_embeddings",
            Tensor::randn(num_relations, d, 1.0 / (d as f64).sqrt(), &mut rng),
        )?;
        let mut layers = Vec::with_capacity(config.attention_layers);
        for l in 0..config.attention_layers {
            let p = format!("layers.{l}");
            let query = RmpnnParams::new(&mut store, &format!("{p}.query"), config, config.query_layers, num_relations, &mut rng)?;
            let value = RmpnnParams::new(&mut store, &format!("{p}.value"), config, config.value_layers, num_relations, &mut rng)?;
            let w1 = Linear::new(&mut store, &format!("{p}.attention.w1"), d, d, &mut rng)?;
            let w2 = Linear::new(&mut store, &format!("{p}.attention.w2"), d, d, &mut rng)?;
            let norm1 = LayerNormParams::new(&mut store, &format!("{p}.norm1"), d)?;
            let norm2 = LayerNormParams::new(&mut store, &format!("{p}.norm2"), d)?;
            let mut widths = vec![d];
            widths.extend(std::iter::repeat_n(config.ffn_expansion * d, config.ffn_depth - 1));
            widths.push(d);
            let ffn = Mlp::new(&mut store, &format!("{p}.ffn"), &widths, &mut rng)?;
            layers.push(AttentionLayerParams {
                query,
                value,
                w1,
                w2,
                norm1,
                norm2,
                ffn,
            });
        }
        let mut widths = vec![d; config.scorer_depth];
        widths.push(1);
        let scorer = Mlp::new(&mut store, "scorer", &widths, &mut rng)?;
        Ok(Self {
            config: config.clone(),
            num_relations,
            store,
            relation_embeddings,
            layers,
            scorer,
        })
    }

    /// Adds `N(0, std²)` noise to every entry of every parameter, drawn
    /// from the init stream at path `[seed]`. Breaks the symmetry of
    /// zero biases and unit gains for diagnostics.
    pub fn perturb(&mut self, std: f64, seed: u64) {
        let mut rng = rng::stream(seed, rng::INIT, &[seed]);
        for p in self.store.iter_mut() {
            let [r, c] = p.value.shape();
            p.value.add_assign(&Tensor::randn(r, c, std, &mut rng));
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.config.hidden_dim
    }

    pub fn num_scalars(&self) -> usize {
        self.store.num_scalars()
    }

    /// `R[r_q] · W_r + b_r` for one relation, computed with plain loops.
    pub fn relation_transform(&self, encoder: &RmpnnParams, relation: usize, query_relation: usize) -> Vec<f64> {
        let d = self.hidden_dim();
        let q = self.store.value(self.relation_embeddings).row(query_relation);
        let w = self.store.value(encoder.relation_weight);
        let b = self.store.value(encoder.relation_bias).row(relation);
        (0..d)
            .map(|j| b[j] + (0..d).map(|i| q[i] * w.get(i, relation * d + j)).sum::<f64>())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique_and_counted() {
        let cfg = ModelConfig {
            hidden_dim: 8,
            ..ModelConfig::default()
        };
        let p = ModelParams::init(&cfg, 4, 1).unwrap();
        let mut names: Vec<_> = p.store.iter().map(|(_, p)| p.name.clone()).collect();
        let n = names.len();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), n);
        assert!(p.store.lookup("layers.1.value.update.1.2.weight").is_some());
        assert!(p.store.lookup("scorer.1.bias").is_some());
        assert_eq!(p.store.value(p.scorer.layers[1].weight).shape(), [8, 1]);
        assert_eq!(p.store.value(p.layers[0].ffn.layers[0].weight).shape(), [8, 32]);
    }

    #[test]
    fn init_is_seeded() {
        let cfg = ModelConfig {
            hidden_dim: 8,
            ..ModelConfig::default()
        };
        let a = ModelParams::init(&cfg, 4, 3).unwrap();
        let b = ModelParams::init(&cfg, 4, 3).unwrap();
        let c = ModelParams::init(&cfg, 4, 4).unwrap();
        assert_eq!(a.store, b.store);
        assert_ne!(a.store, c.store);
    }
}
