#![allow(dead_code)]

use std::path::{Path, PathBuf};

use kgt_core::graph::{DatasetSplit, KnowledgeGraph, SplitMode, Triplet, Vocab};

pub fn umls_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/umls")
}

/// Six entities, three relations: a directed 6-cycle of alternating
/// relations plus two chords.
pub fn toy_facts() -> Vec<Triplet> {
    vec![
        Triplet::new(0, 0, 1),
        Triplet::new(1, 1, 2),
        Triplet::new(2, 2, 3),
        Triplet::new(3, 0, 4),
        Triplet::new(4, 1, 5),
        Triplet::new(5, 2, 0),
        Triplet::new(0, 1, 3),
        Triplet::new(2, 0, 5),
    ]
}

pub fn toy_graph() -> KnowledgeGraph {
    KnowledgeGraph::build(&toy_facts(), 6, 3, true).unwrap()
}

/// In-memory transductive split over the toy graph.
pub fn toy_dataset() -> DatasetSplit {
    let mut train = toy_facts();
    train.extend([Triplet::new(1, 0, 2), Triplet::new(4, 0, 5), Triplet::new(3, 1, 4)]);
    DatasetSplit {
        root: PathBuf::from("toy"),
        mode: SplitMode::Transductive,
        entities: Vocab::from_tokens((0..6).map(|i| format!("e{i}"))).unwrap(),
        relations: Vocab::from_tokens(["r0", "r1", "r2"]).unwrap(),
        train,
        valid: vec![Triplet::new(5, 0, 0), Triplet::new(2, 1, 3)],
        test: vec![Triplet::new(1, 2, 4)],
        inference: None,
    }
}
