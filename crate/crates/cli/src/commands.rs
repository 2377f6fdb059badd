use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use kgt_core::autodiff::Tensor;
use kgt_core::diagnostics::{attention_top_k, kernel_error_sweep, model_gradcheck, scaling_benchmark, ScalingReport};
use kgt_core::eval::{evaluate_target, mrr_spread, EvalSplit, EvalTarget};
use kgt_core::graph::{DatasetSplit, FilterSets, KnowledgeGraph, SplitMode, Triplet, Vocab};
use kgt_core::model::{forward, forward_on_edges, KernelMode, ModelConfig, ModelParams, DENSE_ENTITY_LIMIT};
use kgt_core::train::{
    evaluation_noise, query_edges, resume, train as train_run, Checkpoint, LogRecord, TrainOptions, TrainOutcome, BEST_CHECKPOINT,
    LAST_CHECKPOINT, LEARNING_RATE_GRID, NEGATIVES_GRID, WEIGHT_DECAY_GRID,
};
use kgt_core::wl::rawl2_refine;
use serde_json::json;

use crate::config::{ConfigBuilder, RunConfig, Verbosity};
use crate::{DiagnoseCommand, EvalArgs, PredictArgs, TrainArgs, UserError};

const INVERSE_SUFFIX: &str = "^-1";

fn entity_id(vocab: &Vocab, token: &str) -> Result<usize> {
    vocab.id(token).ok_or_else(|| {
        kgt_core::Error::Vocabulary {
            kind: "entity",
            token: token.to_owned(),
        }
        .into()
    })
}

/// Relation id in the inverse-augmented space.
fn relation_id(vocab: &Vocab, token: &str) -> Result<usize> {
    let (base, inverse) = match token.strip_suffix(INVERSE_SUFFIX) {
        Some(base) => (base, true),
        None => (token, false),
    };
    let id = vocab.id(base).ok_or_else(|| kgt_core::Error::Vocabulary {
        kind: "relation",
        token: token.to_owned(),
    })?;
    Ok(if inverse { id + vocab.len() } else { id })
}

fn relation_token(vocab: &Vocab, id: usize) -> String {
    let nb = vocab.len();
    match (id < nb, vocab.token(id % nb.max(1))) {
        (true, Some(t)) => t.to_owned(),
        (false, Some(t)) => format!("{t}{INVERSE_SUFFIX}"),
        _ => format!("#{id}"),
    }
}

fn entity_token(vocab: &Vocab, id: usize) -> String {
    vocab.token(id).map_or_else(|| format!("#{id}"), str::to_owned)
}

/// A checkpoint with the dataset it was trained on, indexed by the
/// checkpoint's vocabularies.
struct Loaded {
    ckpt: Checkpoint,
    data: DatasetSplit,
}

fn load_run(path: &Path, data_dir: Option<&Path>) -> Result<Loaded> {
    let ckpt = Checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    let dir = data_dir.map_or_else(|| PathBuf::from(&ckpt.dataset_path), Path::to_path_buf);
    let data = DatasetSplit::load_with(
        &dir,
        ckpt.dataset_mode,
        Some(ckpt.entities.clone().freeze()),
        Some(ckpt.relations.clone().freeze()),
    )
    .context("loading dataset")?;
    Ok(Loaded { ckpt, data })
}

pub fn train(args: TrainArgs) -> Result<bool> {
    let mut builder = ConfigBuilder::new()?;
    if let Some(path) = &args.config {
        builder.apply_file(path)?;
    }
    for o in &args.overrides {
        builder.set_dotted(o)?;
    }
    if let Some(seed) = args.seed {
        builder.set("train", "seed", &seed.to_string())?;
    }
    let mut cfg = builder.build()?;
    if let Some(out) = &args.out {
        cfg.run.out = out.clone();
    }
    for w in cfg.off_grid() {
        eprintln!("warning: {w}; continuing outside the search grid");
    }
    let data = DatasetSplit::load(&cfg.data.path, cfg.data.mode).context("loading dataset")?;
    let out = cfg.run.out.clone();
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    cfg.write_resolved(&out)?;
    if cfg.run.verbosity != Verbosity::Quiet {
        print!("{}", cfg.to_text()?);
        eprintln!(
            "dataset {}: {} entities, {} relations, {}/{}/{} train/valid/test facts",
            cfg.data.path.display(),
            data.num_entities(),
            data.num_base_relations(),
            data.train.len(),
            data.valid.len(),
            data.test.len()
        );
    }
    if args.grid {
        return grid(&cfg, &data);
    }
    let outcome = run_one(&cfg, &data, &out, args.resume)?;
    report_outcome(&outcome, &out);
    Ok(true)
}

fn run_one(cfg: &RunConfig, data: &DatasetSplit, out: &Path, resume_run: bool) -> Result<TrainOutcome> {
    let verbosity = cfg.run.verbosity;
    let mut observer = |r: &LogRecord| {
        if verbosity != Verbosity::Quiet {
            println!("{}", serde_json::to_string(r).unwrap_or_default());
        }
    };
    let options = TrainOptions {
        out_dir: Some(out.to_path_buf()),
        observer: Some(&mut observer),
        ..TrainOptions::default()
    };
    if resume_run {
        let path = out.join(LAST_CHECKPOINT);
        let mut ckpt = Checkpoint::load(&path).with_context(|| format!("loading checkpoint {}", path.display()))?;
        if ckpt.model_config != cfg.model {
            anyhow::bail!(UserError(format!("model configuration differs from {}", path.display())));
        }
        // The epoch budget may be extended; everything else comes from the checkpoint.
        ckpt.train_config.epochs = cfg.train.epochs;
        if ckpt.train_config != cfg.train {
            eprintln!("warning: training settings differ from {}; continuing with the checkpoint's", path.display());
        }
        Ok(resume(data, ckpt, options)?)
    } else {
        Ok(train_run(data, &cfg.model, &cfg.train, options)?)
    }
}

fn report_outcome(outcome: &TrainOutcome, out: &Path) {
    let p = &outcome.last.progress;
    match p.best_valid_mrr {
        Some(mrr) => eprintln!(
            "stopped ({:?}) after epoch {}; best valid MRR {mrr:.4} at epoch {}",
            outcome.stop, p.epoch, p.best_epoch
        ),
        None => eprintln!("stopped ({:?}) after epoch {}; no validation run", outcome.stop, p.epoch),
    }
    let best = out.join(BEST_CHECKPOINT);
    let shown = if best.exists() { best } else { out.join(LAST_CHECKPOINT) };
    eprintln!("checkpoint: {}", shown.display());
}

fn grid(base: &RunConfig, data: &DatasetSplit) -> Result<bool> {
    let out = &base.run.out;
    let summary_path = out.join("grid.jsonl");
    let mut summary = BufWriter::new(File::create(&summary_path)?);
    let mut best: Option<(f64, PathBuf)> = None;
    for &lr in &LEARNING_RATE_GRID {
        for &wd in &WEIGHT_DECAY_GRID {
            for &neg in &NEGATIVES_GRID {
                if neg >= data.num_entities() {
                    eprintln!("skipping {neg} negatives: only {} entities", data.num_entities());
                    continue;
                }
                let mut cfg = base.clone();
                cfg.train.learning_rate = lr;
                cfg.train.weight_decay = wd;
                cfg.train.num_negatives = neg;
                let dir = out.join("grid").join(format!("lr{lr:e}-wd{wd:e}-neg{neg}"));
                fs::create_dir_all(&dir)?;
                cfg.run.out = dir.clone();
                cfg.write_resolved(&dir)?;
                eprintln!("grid point {}", dir.display());
                let outcome = run_one(&cfg, data, &dir, false)?;
                let mrr = outcome.last.progress.best_valid_mrr;
                let record = json!({
                    "learning_rate": lr,
                    "weight_decay": wd,
                    "num_negatives": neg,
                    "best_valid_mrr": mrr,
                    "best_epoch": outcome.last.progress.best_epoch,
                    "dir": dir,
                });
                writeln!(summary, "{record}")?;
                summary.flush()?;
                if let Some(mrr) = mrr {
                    if best.as_ref().is_none_or(|(b, _)| mrr > *b) {
                        best = Some((mrr, dir));
                    }
                }
            }
        }
    }
    match best {
        Some((mrr, dir)) => eprintln!("best grid point: {} (valid MRR {mrr:.4})", dir.display()),
        None => eprintln!("no grid point produced a validation score"),
    }
    eprintln!("summary: {}", summary_path.display());
    Ok(true)
}

pub fn eval(mut args: EvalArgs) -> Result<bool> {
    if args.noise_seeds == 0 {
        anyhow::bail!(UserError("--noise-seeds must be at least 1".into()));
    }
    if args.verbose {
        args.noise_seeds = args.noise_seeds.max(3);
    }
    let Loaded { ckpt, data } = load_run(&args.checkpoint, args.data.as_deref())?;
    let target = EvalTarget::new(&data, args.split)?;
    let entities = match (args.split, &data.inference) {
        (EvalSplit::Test, Some(inf)) => &inf.entities,
        _ => &data.entities,
    };
    let mode = ckpt.model_config.noise_mode;
    let mut reports = Vec::new();
    for i in 0..args.noise_seeds {
        let seed = ckpt.train_config.seed + i;
        let evaluation = evaluate_target(&target, &ckpt.params, &evaluation_noise(mode, seed), !args.raw)?;
        if i == 0 {
            if let Some(path) = &args.per_query {
                let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
                for r in &evaluation.rankings {
                    let rec = json!({
                        "head": entity_token(entities, r.head),
                        "relation": relation_token(&data.relations, r.relation),
                        "tail": entity_token(entities, r.gold),
                        "rank": r.rank,
                        "candidates": r.num_candidates,
                    });
                    writeln!(w, "{rec}")?;
                }
                w.flush()?;
            }
        }
        reports.push(evaluation.report);
    }
    let first = &reports[0];
    println!(
        "{}",
        json!({
            "split": args.split.to_string(),
            "filtered": !args.raw,
            "metrics": first,
        })
    );
    if reports.len() > 1 {
        let (mean, std) = mrr_spread(&reports);
        println!(
            "{}",
            json!({ "noise_seeds": reports.len(), "mrr_mean": mean, "mrr_std": std })
        );
    }
    Ok(true)
}

/// Entities sorted by decreasing score, ties by id.
fn ranked(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

pub fn predict(args: PredictArgs) -> Result<bool> {
    let Loaded { ckpt, data } = load_run(&args.checkpoint, args.data.as_deref())?;
    let head = entity_id(&data.entities, &args.head)?;
    let relation = relation_id(&data.relations, &args.relation)?;
    let graph = data.train_graph()?;
    let n = graph.num_entities();
    let noise = evaluation_noise(ckpt.model_config.noise_mode, ckpt.train_config.seed);
    let (scores, candidates) = match &args.holdout {
        None => (forward(&graph, head, relation, &ckpt.params, &noise)?, (0..n).collect::<Vec<_>>()),
        Some(token) => {
            let tail = entity_id(&data.entities, token)?;
            let nb = data.num_base_relations();
            let known = match data.mode {
                SplitMode::Transductive => FilterSets::build(&[&data.train, &data.valid, &data.test], Some(nb)),
                SplitMode::Inductive => FilterSets::build(&[&data.train, &data.valid], Some(nb)),
            };
            let query = known.query(head, relation, tail);
            let edges = graph.message_edges_without(&query_edges(&graph, Triplet::new(head, relation, tail)));
            let (scores, _) = forward_on_edges(&edges, n, head, relation, &ckpt.params, &noise)?;
            let candidates = (0..n).filter(|&e| e == tail || query.filter_set.binary_search(&e).is_err()).collect();
            (scores, candidates)
        }
    };
    let mut k = args.k;
    if k > candidates.len() {
        eprintln!("warning: k = {k} exceeds the {} candidates; showing {}", candidates.len(), candidates.len());
        k = candidates.len();
    }
    let order = ranked(&scores);
    let top: Vec<usize> = order.into_iter().filter(|e| candidates.binary_search(e).is_ok()).take(k).collect();
    if args.json {
        let rows: Vec<_> = top
            .iter()
            .map(|&t| json!({ "tail": entity_token(&data.entities, t), "score": scores[t] }))
            .collect();
        println!("{}", serde_json::Value::Array(rows));
    } else {
        for (i, &t) in top.iter().enumerate() {
            println!("{}\t{}\t{:.6}", i + 1, entity_token(&data.entities, t), scores[t]);
        }
    }
    Ok(true)
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

/// Six entities and three relations: an alternating 6-cycle plus two chords.
fn toy_graph() -> Result<KnowledgeGraph> {
    let facts = [(0, 0, 1), (1, 1, 2), (2, 2, 3), (3, 0, 4), (4, 1, 5), (5, 2, 0), (0, 1, 3), (2, 0, 5)]
        .map(|(h, r, t)| Triplet::new(h, r, t));
    Ok(KnowledgeGraph::build(&facts, 6, 3, true)?)
}

fn print_scaling(report: &ScalingReport) {
    println!("{}", serde_json::to_string(report).unwrap_or_default());
    eprintln!(
        "{}: linear R² = {:.4}, with quadratic term R² = {:.4}",
        report.kernel_mode, report.linear_r2, report.quadratic_r2
    );
}

pub fn diagnose(cmd: DiagnoseCommand) -> Result<bool> {
    match cmd {
        DiagnoseCommand::KernelError { samples, dim, seed } => {
            if samples < 3 || dim < 2 {
                anyhow::bail!(UserError("kernel-error needs at least 3 samples and dimension 2".into()));
            }
            let sweep = kernel_error_sweep(samples, dim, seed)?;
            let pass = sweep.within_bound() && sweep.reaches_sup(1e-3);
            println!("{}", serde_json::to_string(&sweep)?);
            println!(
                "max |kappa - kappa_exp| = {:.6} (sup {:.6}) <= bound {:.6}: {}",
                sweep.max_error,
                sweep.sup,
                sweep.bound,
                verdict(pass)
            );
            Ok(pass)
        }
        DiagnoseCommand::Attention {
            checkpoint,
            head,
            relation,
            top,
            answers,
            data,
        } => {
            let Loaded { ckpt, data } = load_run(&checkpoint, data.as_deref())?;
            let h = entity_id(&data.entities, &head)?;
            let r = relation_id(&data.relations, &relation)?;
            let graph = data.train_graph()?;
            if graph.num_entities() > DENSE_ENTITY_LIMIT {
                return Err(kgt_core::Error::OracleScope {
                    entities: graph.num_entities(),
                    limit: DENSE_ENTITY_LIMIT,
                }
                .into());
            }
            let noise = evaluation_noise(ckpt.model_config.noise_mode, ckpt.train_config.seed);
            let scores = forward(&graph, h, r, &ckpt.params, &noise)?;
            let picked: Vec<usize> = ranked(&scores).into_iter().take(answers).collect();
            for t in attention_top_k(&graph, h, r, &ckpt.params, &noise, &picked, top)? {
                let attended: Vec<_> = t
                    .top
                    .iter()
                    .map(|&(e, w)| json!({ "entity": entity_token(&data.entities, e), "weight": w }))
                    .collect();
                println!(
                    "{}",
                    json!({
                        "layer": t.layer,
                        "answer": entity_token(&data.entities, t.entity),
                        "score": scores[t.entity],
                        "attended": attended,
                    })
                );
            }
            Ok(true)
        }
        DiagnoseCommand::Gradcheck {
            seed,
            dim,
            step,
            tolerance,
        } => {
            let graph = toy_graph()?;
            let cfg = ModelConfig {
                hidden_dim: dim,
                ..ModelConfig::default()
            };
            let mut params = ModelParams::init(&cfg, graph.num_relations(), seed)?;
            // Move off the zero biases so every path carries gradient.
            params.perturb(0.1, seed);
            let mut rng = kgt_core::rng::stream(seed, kgt_core::rng::NOISE, &[]);
            let noise = Tensor::randn(graph.num_entities(), dim, 1.0, &mut rng);
            let report = model_gradcheck(&graph, &params, Triplet::new(0, 1, 3), &[1, 4, 5], &noise, step, tolerance)?;
            for p in &report.params {
                println!("{}\t{}\t{:.3e}", p.name, p.entries, p.max_rel_error);
            }
            let pass = report.passed();
            println!(
                "{} parameter groups, max relative error {:.3e} <= {tolerance:e}: {}",
                report.params.len(),
                report.max_rel_error(),
                verdict(pass)
            );
            Ok(pass)
        }
        DiagnoseCommand::Wl { data, head, rounds } => {
            let data = DatasetSplit::load(&data, SplitMode::Transductive).context("loading dataset")?;
            let h = entity_id(&data.entities, &head)?;
            let graph = data.train_graph()?;
            let coloring = rawl2_refine(&graph, h, rounds)?;
            let c = &coloring.coloring;
            println!(
                "{}",
                json!({
                    "head": head,
                    "rounds": c.rounds,
                    "stable": c.stable,
                    "classes": c.num_classes(),
                })
            );
            for (color, members) in c.classes().iter().enumerate() {
                let tokens: Vec<String> = members.iter().map(|&e| entity_token(&data.entities, e)).collect();
                println!("{}", json!({ "color": color, "size": members.len(), "entities": tokens }));
            }
            Ok(true)
        }
        DiagnoseCommand::Scaling {
            sizes,
            dense_sizes,
            repeats,
            dim,
        } => {
            if sizes.len() < 2 || (!dense_sizes.is_empty() && dense_sizes.len() < 2) {
                anyhow::bail!(UserError("scaling needs at least two sizes per mode".into()));
            }
            let mut cfg = ModelConfig {
                hidden_dim: dim,
                ..ModelConfig::default()
            };
            cfg.validate()?;
            let params = ModelParams::init(&cfg, 2, 0)?;
            // Warm caches before the timed sizes.
            scaling_benchmark(&[sizes[0] / 4 + 2, sizes[0] / 2 + 2], &params, 1)?;
            print_scaling(&scaling_benchmark(&sizes, &params, repeats)?);
            if !dense_sizes.is_empty() {
                cfg.kernel_mode = KernelMode::FullExponential;
                let params = ModelParams::init(&cfg, 2, 0)?;
                print_scaling(&scaling_benchmark(&dense_sizes, &params, repeats)?);
            }
            Ok(true)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn relations() -> Vocab {
        Vocab::from_tokens(["a", "b"]).unwrap()
    }

    #[test]
    fn relation_tokens_round_trip() {
        let v = relations();
        for id in 0..4 {
            assert_eq!(relation_id(&v, &relation_token(&v, id)).unwrap(), id);
        }
        assert_eq!(relation_id(&v, "b^-1").unwrap(), 3);
        assert!(relation_id(&v, "c").is_err());
    }

    #[test]
    fn ranking_breaks_ties_by_id() {
        assert_eq!(ranked(&[0.5, 0.9, 0.5, 0.1]), vec![1, 0, 2, 3]);
    }
}
