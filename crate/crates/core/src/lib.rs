//! Knowledge-graph reasoning with a relational-message-passing
//! transformer and linear kernel attention.

pub mod autodiff;
pub mod diagnostics;
pub mod error;
pub mod eval;
pub mod graph;
pub mod model;
pub mod rng;
pub mod train;
pub mod wl;

pub use error::{Error, Result};
