mod common;

use kgt_core::eval::{compute_metrics, evaluate, evaluate_target, rank_query, EvalSplit, EvalTarget};
use kgt_core::graph::{DatasetSplit, FilterSets, SplitMode, Triplet, Vocab};
use kgt_core::model::{ModelConfig, ModelParams, Noise};

#[test]
fn untrained_model_ranks_near_random_on_umls() {
    let data = DatasetSplit::load(&common::umls_dir(), SplitMode::Transductive).unwrap();
    let target = EvalTarget::new(&data, EvalSplit::Valid).unwrap();
    assert_eq!(target.queries.len(), 2 * 652);
    let params = ModelParams::init(&ModelConfig::default(), 92, 0).unwrap();
    let queries = &target.queries[..200];
    let eval = evaluate(&target.graph, queries, &params, &Noise::Seeded(1), true).unwrap();
    let mrr = eval.report.mrr;
    assert!((0.02..=0.10).contains(&mrr), "{mrr}");
    assert_eq!(eval.rankings.len(), 200);
    assert!(eval.rankings.iter().all(|r| r.rank >= 1.0 && r.rank <= r.num_candidates as f64));
}

#[test]
fn evaluation_is_deterministic_for_a_noise_seed() {
    let data = common::toy_dataset();
    let target = EvalTarget::new(&data, EvalSplit::Test).unwrap();
    let cfg = ModelConfig {
        hidden_dim: 8,
        ..ModelConfig::default()
    };
    let params = ModelParams::init(&cfg, 6, 2).unwrap();
    let a = evaluate_target(&target, &params, &Noise::Seeded(4), true).unwrap();
    let b = evaluate_target(&target, &params, &Noise::Seeded(4), true).unwrap();
    assert_eq!(a.rankings, b.rankings);
    assert!(a.report.both_directions);
    assert_eq!(a.report.count, 2);
}

#[test]
fn perfect_scores_give_unit_mrr() {
    let facts = [Triplet::new(0, 0, 1), Triplet::new(1, 0, 2), Triplet::new(0, 1, 2)];
    let filter = FilterSets::build(&[&facts], Some(2));
    let queries = filter.queries_both_directions(&facts, 2);
    let ranks: Vec<f64> = queries
        .iter()
        .map(|q| {
            // A memorizer scores exactly the known answers high.
            let scores: Vec<f64> = (0..3).map(|v| f64::from(u8::from(q.filter_set.contains(&v)))).collect();
            rank_query(&scores, q, true).unwrap().0
        })
        .collect();
    let m = compute_metrics(&ranks, true).unwrap();
    assert_eq!(m.mrr, 1.0);
    assert_eq!(m.count, 6);
}

#[test]
fn inductive_split_uses_inference_entities() {
    let dir = tempfile::tempdir().unwrap();
    let w = |name: &str, text: &str| std::fs::write(dir.path().join(name), text).unwrap();
    w("train.txt", "a\tr\tb\nb\ts\tc\n");
    w("valid.txt", "a\ts\tc\n");
    w("inference.txt", "x\tr\ty\ny\ts\tz\nz\tr\tw\n");
    w("test.txt", "x\ts\tz\n");
    let data = DatasetSplit::load(dir.path(), SplitMode::Inductive).unwrap();
    let test = EvalTarget::new(&data, EvalSplit::Test).unwrap();
    assert_eq!(test.graph.num_entities(), 4);
    let inf: &Vocab = &data.inference.as_ref().unwrap().entities;
    let x = inf.id("x").unwrap();
    let z = inf.id("z").unwrap();
    assert_eq!(test.queries[0].head, x);
    assert_eq!(test.queries[0].gold_tail, z);
    let valid = EvalTarget::new(&data, EvalSplit::Valid).unwrap();
    assert_eq!(valid.graph.num_entities(), 3);
}
