//! Dense tensors with reverse-mode differentiation.

mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, GradCheckReport, ParamCheck, GRAD_SCALE_FLOOR};
pub use params::{Gradients, ParamId, ParamStore, Parameter};
pub use tape::{sigmoid, NodeId, Tape};
pub use tensor::Tensor;
