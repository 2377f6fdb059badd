use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::checkpoint::{Checkpoint, TrainProgress};
use super::config::TrainConfig;
use super::loss::{negative_sampling_loss_on_tape, sample_negatives};
use crate::autodiff::{Gradients, Tape};
use crate::error::{Error, Result};
use crate::eval::{evaluate_target, EvalSplit, EvalTarget, MetricsReport};
use crate::graph::{DatasetSplit, KnowledgeGraph, Triplet};
use crate::model::{encode, score, ModelConfig, ModelParams, Noise, NoiseMode, QueryContext};
use crate::rng;

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const BEST_CHECKPOINT: &str = "best.ckpt";

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub epoch: usize,
    pub split: String,
    pub loss: Option<f64>,
    pub mrr: Option<f64>,
    pub hits1: Option<f64>,
    pub hits3: Option<f64>,
    pub hits10: Option<f64>,
    pub wall_ms: u64,
}

impl LogRecord {
    fn train(epoch: usize, loss: f64, wall_ms: u64) -> Self {
        Self {
            epoch,
            split: "train".into(),
            loss: Some(loss),
            mrr: None,
            hits1: None,
            hits3: None,
            hits10: None,
            wall_ms,
        }
    }

    pub fn metrics(epoch: usize, split: &str, loss: Option<f64>, m: &MetricsReport, wall_ms: u64) -> Self {
        Self {
            epoch,
            split: split.into(),
            loss,
            mrr: Some(m.mrr),
            hits1: Some(m.hits1),
            hits3: Some(m.hits3),
            hits10: Some(m.hits10),
            wall_ms,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    EpochLimit,
    EarlyStopping,
    TargetReached,
    Interrupted,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub last: Checkpoint,
    pub best: Option<Checkpoint>,
    /// Records produced by this invocation.
    pub log: Vec<LogRecord>,
    pub stop: StopReason,
}

/// Where and how a run reports.
#[derive(Default)]
pub struct TrainOptions<'a> {
    /// Receives `metrics.jsonl`, `last.ckpt` and `best.ckpt`.
    pub out_dir: Option<PathBuf>,
    pub observer: Option<&'a mut dyn FnMut(&LogRecord)>,
    /// Return once this many epochs are complete, as if interrupted;
    /// the run can be continued with [`resume`].
    pub interrupt_after: Option<usize>,
}

/// Noise for one training query at `(epoch, position)`.
pub fn training_noise(mode: NoiseMode, seed: u64, epoch: usize, position: usize) -> Noise {
    match mode {
        NoiseMode::PerForward => Noise::Seeded(rng::derive_seed(seed, rng::NOISE, &[epoch as u64, position as u64])),
        NoiseMode::FixedSeed => Noise::Seeded(seed),
        NoiseMode::Disabled => Noise::Disabled,
    }
}

/// Noise used when ranking: a single draw from `seed`.
pub fn evaluation_noise(mode: NoiseMode, seed: u64) -> Noise {
    match mode {
        NoiseMode::Disabled => Noise::Disabled,
        _ => Noise::Seeded(seed),
    }
}

/// The fact itself and its inverse, both hidden from message passing
/// while the fact is being predicted.
pub fn query_edges(graph: &KnowledgeGraph, query: Triplet) -> [Triplet; 2] {
    [
        query,
        Triplet::new(query.tail, graph.inverse_relation(query.relation), query.head),
    ]
}

/// Loss and parameter gradients of one query against `negatives`.
pub fn query_loss(
    params: &ModelParams,
    graph: &KnowledgeGraph,
    query: Triplet,
    negatives: &[usize],
    noise: &Noise,
) -> Result<(f64, Gradients)> {
    let n = graph.num_entities();
    let noise = noise.materialize(n, params.hidden_dim())?;
    let edges = graph.message_edges_without(&query_edges(graph, query));
    let mut tape = Tape::new(&params.store);
    let ctx = QueryContext::new(&mut tape, params, &edges, n, query.head, query.relation, noise)?;
    let nodes = encode(&mut tape, params, &ctx)?;
    let mut rows = Vec::with_capacity(negatives.len() + 1);
    rows.push(query.tail);
    rows.extend_from_slice(negatives);
    let scores = score(&mut tape, params, nodes.output, Some(rows.into()))?;
    let loss = negative_sampling_loss_on_tape(&mut tape, scores)?;
    let value = tape.value(loss).item();
    Ok((value, tape.backward(loss)?))
}

fn norm_report(params: &ModelParams) -> String {
    let mut worst: Vec<(f64, &str)> = params
        .store
        .iter()
        .map(|(_, p)| (p.value.norm(), p.name.as_str()))
        .collect();
    worst.sort_by(|a, b| b.0.total_cmp(&a.0));
    let top: Vec<String> = worst.iter().take(3).map(|(v, n)| format!("{n}={v:.4e}")).collect();
    format!(
        "parameter norm {:.4e}, gradient norm {:.4e}, largest: {}",
        params.store.iter().map(|(_, p)| p.value.norm().powi(2)).sum::<f64>().sqrt(),
        params.store.global_norm(),
        top.join(", ")
    )
}

/// One optimizer step over `batch`, whose entries are `(position in
/// epoch, query)`. Returns the summed query loss.
pub fn train_step(
    params: &mut ModelParams,
    adam: &mut AdamState,
    config: &TrainConfig,
    graph: &KnowledgeGraph,
    epoch: usize,
    batch_index: usize,
    batch: &[(usize, Triplet)],
) -> Result<f64> {
    let n = graph.num_entities();
    let snapshot: &ModelParams = params;
    let results = batch
        .par_iter()
        .map(|&(pos, q)| {
            let mut rng = rng::stream(config.seed, rng::NEGATIVES, &[epoch as u64, pos as u64]);
            let negatives = sample_negatives(q.tail, config.num_negatives, n, &mut rng)?;
            let noise = training_noise(snapshot.config.noise_mode, config.seed, epoch, pos);
            query_loss(snapshot, graph, q, &negatives, &noise)
        })
        .collect::<Result<Vec<_>>>()?;
    let total: f64 = results.iter().map(|(l, _)| l).sum();
    if !total.is_finite() {
        params.store.zero_grad();
        for (_, g) in &results {
            params.store.accumulate(g);
        }
        return Err(Error::NonFiniteLoss {
            epoch: epoch + 1,
            batch: batch_index,
            detail: norm_report(params),
        });
    }
    params.store.zero_grad();
    let scale = 1.0 / batch.len() as f64;
    for (_, g) in &results {
        params.store.accumulate_scaled(g, scale);
    }
    adam_step(&mut params.store, adam, config)?;
    Ok(total)
}

struct Run {
    graph: KnowledgeGraph,
    valid: Option<EvalTarget>,
    ck: Checkpoint,
    best: Option<Checkpoint>,
    log: Vec<LogRecord>,
    metrics: Option<(File, PathBuf)>,
    out_dir: Option<PathBuf>,
}

impl Run {
    fn emit(&mut self, record: LogRecord, observer: &mut Option<&mut dyn FnMut(&LogRecord)>) -> Result<()> {
        if let Some((f, path)) = &mut self.metrics {
            let line = serde_json::to_string(&record).map_err(|e| Error::Contract(e.to_string()))?;
            writeln!(f, "{line}").map_err(|e| Error::io(path.as_path(), e))?;
        }
        if let Some(obs) = observer {
            obs(&record);
        }
        self.log.push(record);
        Ok(())
    }

    fn save(&self, name: &str, ck: &Checkpoint) -> Result<()> {
        match &self.out_dir {
            Some(dir) => ck.save(&dir.join(name)),
            None => Ok(()),
        }
    }

    fn epoch(&mut self, epoch: usize) -> Result<(f64, u64)> {
        let cfg = self.ck.train_config.clone();
        let start = Instant::now();
        let mut order: Vec<Triplet> = self.graph.edges().to_vec();
        order.shuffle(&mut rng::stream(cfg.seed, rng::SHUFFLE, &[epoch as u64]));
        let indexed: Vec<(usize, Triplet)> = order.into_iter().enumerate().collect();
        let mut total = 0.0;
        let mut seen = 0usize;
        for (b, batch) in indexed.chunks(cfg.batch_size).enumerate() {
            if cfg.max_steps_per_epoch.is_some_and(|m| b >= m) {
                break;
            }
            total += train_step(&mut self.ck.params, &mut self.ck.adam, &cfg, &self.graph, epoch, b, batch)?;
            seen += batch.len();
            self.ck.progress.step += 1;
        }
        let mean = if seen == 0 { 0.0 } else { total / seen as f64 };
        Ok((mean, start.elapsed().as_millis() as u64))
    }

    fn execute(
        mut self,
        observer: &mut Option<&mut dyn FnMut(&LogRecord)>,
        interrupt_after: Option<usize>,
    ) -> Result<TrainOutcome> {
        let cfg = self.ck.train_config.clone();
        let mut stop = StopReason::EpochLimit;
        while self.ck.progress.epoch < cfg.epochs {
            if interrupt_after.is_some_and(|n| self.ck.progress.epoch >= n) {
                stop = StopReason::Interrupted;
                break;
            }
            let epoch = self.ck.progress.epoch;
            let (loss, wall_ms) = self.epoch(epoch)?;
            self.ck.progress.epoch += 1;
            self.emit(LogRecord::train(epoch + 1, loss, wall_ms), observer)?;

            let due = (epoch + 1).is_multiple_of(cfg.eval_interval) || epoch + 1 == cfg.epochs;
            if let (true, Some(target)) = (due, &self.valid) {
                let start = Instant::now();
                let noise = evaluation_noise(self.ck.model_config.noise_mode, cfg.seed);
                let report = evaluate_target(target, &self.ck.params, &noise, true)?.report;
                let record = LogRecord::metrics(epoch + 1, "valid", Some(loss), &report, start.elapsed().as_millis() as u64);
                let p = &mut self.ck.progress;
                if p.best_valid_mrr.is_none_or(|b| report.mrr > b) {
                    p.best_valid_mrr = Some(report.mrr);
                    p.best_epoch = epoch + 1;
                    p.stale_evals = 0;
                    self.best = Some(self.ck.clone());
                    self.save(BEST_CHECKPOINT, &self.ck)?;
                } else {
                    p.stale_evals += 1;
                }
                self.emit(record, observer)?;
                if cfg.stop_at_valid_mrr.is_some_and(|t| report.mrr >= t) {
                    stop = StopReason::TargetReached;
                } else if self.ck.progress.stale_evals >= cfg.patience {
                    stop = StopReason::EarlyStopping;
                }
            }
            self.save(LAST_CHECKPOINT, &self.ck)?;
            if stop != StopReason::EpochLimit {
                break;
            }
        }
        Ok(TrainOutcome {
            last: self.ck,
            best: self.best,
            log: self.log,
            stop,
        })
    }
}

fn prepare(data: &DatasetSplit, ck: Checkpoint, best: Option<Checkpoint>, out_dir: Option<PathBuf>, append: bool) -> Result<Run> {
    ck.model_config.validate()?;
    ck.train_config.validate()?;
    let graph = data.train_graph()?;
    let valid = if data.valid.is_empty() {
        None
    } else {
        Some(EvalTarget::new(data, EvalSplit::Valid)?)
    };
    let metrics = match &out_dir {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let path = dir.join(METRICS_FILE);
            let file = OpenOptions::new()
                .create(true)
                .write(true)
                .append(append)
                .truncate(!append)
                .open(&path)
                .map_err(|e| Error::io(&path, e))?;
            Some((file, path))
        }
        None => None,
    };
    Ok(Run {
        graph,
        valid,
        ck,
        best,
        log: Vec::new(),
        metrics,
        out_dir,
    })
}

/// Trains from a fresh initialization.
pub fn train(data: &DatasetSplit, model_config: &ModelConfig, train_config: &TrainConfig, options: TrainOptions<'_>) -> Result<TrainOutcome> {
    model_config.validate()?;
    train_config.validate()?;
    let params = ModelParams::init(model_config, 2 * data.num_base_relations(), train_config.seed)?;
    let ck = Checkpoint {
        model_config: model_config.clone(),
        train_config: train_config.clone(),
        dataset_path: data.root.display().to_string(),
        dataset_mode: data.mode,
        entities: data.entities.clone().freeze(),
        relations: data.relations.clone().freeze(),
        progress: TrainProgress::default(),
        adam: AdamState::new(&params.store),
        params,
    };
    let TrainOptions {
        out_dir,
        mut observer,
        interrupt_after,
    } = options;
    prepare(data, ck, None, out_dir, false)?.execute(&mut observer, interrupt_after)
}

/// Continues a run from its last checkpoint. With the same dataset the
/// remaining epochs reproduce the uninterrupted run exactly.
pub fn resume(data: &DatasetSplit, checkpoint: Checkpoint, options: TrainOptions<'_>) -> Result<TrainOutcome> {
    if checkpoint.entities.tokens() != data.entities.tokens() || checkpoint.relations.tokens() != data.relations.tokens() {
        return Err(Error::Checkpoint("dataset vocabularies differ from the checkpoint's".into()));
    }
    let TrainOptions {
        out_dir,
        mut observer,
        interrupt_after,
    } = options;
    let best = match &out_dir {
        Some(dir) if dir.join(BEST_CHECKPOINT).is_file() => Some(Checkpoint::load(&dir.join(BEST_CHECKPOINT))?),
        _ => None,
    };
    prepare(data, checkpoint, best, out_dir, true)?.execute(&mut observer, interrupt_after)
}
