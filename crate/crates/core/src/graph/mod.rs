//! Triplet datasets, the indexed knowledge graph and ranking filters.

mod dataset;
mod filter;
mod kg;
mod vocab;

pub use dataset::{load_triplets, DatasetSplit, InferenceFacts, SplitMode};
pub use filter::{FilterSets, Query};
pub use kg::{KnowledgeGraph, MessageEdges, Triplet};
pub use vocab::Vocab;
