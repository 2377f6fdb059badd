//! The reasoning transformer: query/value relational encoders, kernel
//! attention, the layer stack and the output scorer.

mod attention;
mod config;
mod forward;
mod kernel;
mod params;
mod rmpnn;

pub use attention::{dense_attention, dense_attention_oracle, linear_attention, query_key};
pub use config::{KernelMode, ModelConfig, NoiseMode, DENSE_ENTITY_LIMIT, HIDDEN_DIM_GRID, LAYER_GRID};
pub use forward::{
    encode, forward, forward_on_edges, score, transformer_layer, ForwardNodes, ForwardState, LayerNodes, Noise,
    QueryContext,
};
pub use kernel::{approximate_kernel, exponential_kernel, kernel, KERNEL_ERROR_BOUND, KERNEL_ERROR_SUP};
pub use params::{AttentionLayerParams, LayerNormParams, Linear, Mlp, ModelParams, RmpnnParams};
pub use rmpnn::{head_indicator, relation_transforms, relational_message, rmpnn_forward};
