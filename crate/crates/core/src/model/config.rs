use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Attention kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelMode {
    /// `1 + <q, k>` on unit rows, evaluated in linear time.
    Approximate,
    /// `exp(<q, k>)` on unit rows, evaluated densely in quadratic time.
    FullExponential,
}

/// Source of the Gaussian features fed to the query encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// Fresh draw for every training forward pass.
    PerForward,
    /// The same draw for every pass, from the run seed.
    FixedSeed,
    /// All-zero features (used by the expressivity diagnostics).
    Disabled,
}

macro_rules! str_enum {
    ($ty:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok($ty::$variant),)+
                    other => Err(Error::Config(format!(
                        concat!("unknown ", stringify!($ty), " `{}` (expected one of: ", $($text, " "),+, ")"),
                        other
                    ))),
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($ty::$variant => $text,)+ })
            }
        }
    };
}

str_enum!(KernelMode { Approximate => "approximate", FullExponential => "full_exponential" });
str_enum!(NoiseMode { PerForward => "per_forward", FixedSeed => "fixed_seed", Disabled => "disabled" });

/// Dense attention is refused above this many entities.
pub const DENSE_ENTITY_LIMIT: usize = 4096;

/// Hidden sizes searched by the default grid.
pub const HIDDEN_DIM_GRID: [usize; 3] = [16, 32, 64];
/// Layer counts searched by the default grid (all three depths).
pub const LAYER_GRID: [usize; 3] = [1, 2, 3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub hidden_dim: usize,
    /// Transformer layers.
    pub attention_layers: usize,
    /// Message-passing layers of the query encoder.
    pub query_layers: usize,
    /// Message-passing layers of the value encoder.
    pub value_layers: usize,
    /// Depth of the update networks inside both encoders.
    pub mlp_depth: usize,
    pub ffn_depth: usize,
    pub ffn_expansion: usize,
    pub scorer_depth: usize,
    pub kernel_mode: KernelMode,
    pub noise_mode: NoiseMode,
    pub heads: usize,
    pub layer_norm_eps: f64,
    pub normalize_eps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 32,
            attention_layers: 2,
            query_layers: 2,
            value_layers: 2,
            mlp_depth: 3,
            ffn_depth: 2,
            ffn_expansion: 4,
            scorer_depth: 2,
            kernel_mode: KernelMode::Approximate,
            noise_mode: NoiseMode::PerForward,
            heads: 1,
            layer_norm_eps: 1e-5,
            normalize_eps: 1e-12,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("hidden_dim", self.hidden_dim),
            ("attention_layers", self.attention_layers),
            ("query_layers", self.query_layers),
            ("value_layers", self.value_layers),
            ("mlp_depth", self.mlp_depth),
            ("ffn_depth", self.ffn_depth),
            ("ffn_expansion", self.ffn_expansion),
            ("scorer_depth", self.scorer_depth),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.heads != 1 {
            return Err(Error::Config(format!(
                "heads = {} is not supported; attention is single-head",
                self.heads
            )));
        }
        if !(self.layer_norm_eps > 0.0 && self.normalize_eps > 0.0) {
            return Err(Error::Config("epsilons must be positive".into()));
        }
        Ok(())
    }

    /// Settings that lie outside the default search grid.
    pub fn off_grid(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !HIDDEN_DIM_GRID.contains(&self.hidden_dim) {
            out.push(format!("hidden_dim = {} not in {:?}", self.hidden_dim, HIDDEN_DIM_GRID));
        }
        for (name, v) in [
            ("attention_layers", self.attention_layers),
            ("query_layers", self.query_layers),
            ("value_layers", self.value_layers),
        ] {
            if !LAYER_GRID.contains(&v) {
                out.push(format!("{name} = {v} not in {LAYER_GRID:?}"));
            }
        }
        out
    }
}
