//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "KGTCKPT\0" | version u32 | sha256(config) [32]
//! config: u64 length + UTF-8 JSON {model, train, dataset_path, dataset_mode}
//! entity vocab, relation vocab: u64 count, then u64 length + UTF-8 per token
//! progress: epoch u64 | step u64 | best_mrr f64 (NaN = none) | best_epoch u64 | stale_evals u64
//! tensors: u64 count, then per tensor
//!     u64 length + UTF-8 name | rows u64 | cols u64 | dtype u8 (0 = f64) | payload
//! optimizer: step u64, then first and second moments of each tensor in order
//! ```
//!
//! Random state is not stored as generator internals: every stream is a
//! pure function of the run seed (in the config) and the epoch/step
//! counters (in the progress block).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::adam::AdamState;
use super::config::TrainConfig;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::graph::{SplitMode, Vocab};
use crate::model::{ModelConfig, ModelParams};

const MAGIC: &[u8; 8] = b"KGTCKPT\0";
pub const FORMAT_VERSION: u32 = 1;
const DTYPE_F64: u8 = 0;

/// Loop counters needed to resume training.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TrainProgress {
    /// Completed epochs.
    pub epoch: usize,
    /// Optimizer steps taken.
    pub step: u64,
    pub best_valid_mrr: Option<f64>,
    pub best_epoch: usize,
    /// Validations since the last improvement.
    pub stale_evals: usize,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model_config: ModelConfig,
    pub train_config: TrainConfig,
    pub dataset_path: String,
    pub dataset_mode: SplitMode,
    pub entities: Vocab,
    pub relations: Vocab,
    pub progress: TrainProgress,
    pub params: ModelParams,
    pub adam: AdamState,
}

#[derive(Serialize, Deserialize)]
struct ConfigBlock {
    model: ModelConfig,
    train: TrainConfig,
    dataset_path: String,
    dataset_mode: String,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn str(&mut self, s: &str) {
        self.u64(s.len() as u64);
        self.0.extend_from_slice(s.as_bytes());
    }

    fn vocab(&mut self, v: &Vocab) {
        self.u64(v.len() as u64);
        for t in v.tokens() {
            self.str(t);
        }
    }

    fn payload(&mut self, t: &Tensor) {
        for &x in t.data() {
            self.f64(x);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Checkpoint("count overflows usize".into()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn str(&mut self) -> Result<&'a str> {
        let n = self.usize()?;
        std::str::from_utf8(self.take(n)?).map_err(|e| Error::Checkpoint(format!("invalid UTF-8: {e}")))
    }

    fn vocab(&mut self) -> Result<Vocab> {
        let n = self.usize()?;
        let tokens = (0..n).map(|_| self.str().map(str::to_owned)).collect::<Result<Vec<_>>>()?;
        Ok(Vocab::from_tokens(tokens)?.freeze())
    }

    fn payload(&mut self, rows: usize, cols: usize) -> Result<Tensor> {
        let bytes = self.take(rows * cols * 8)?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Tensor::from_vec(rows, cols, data)
    }
}

impl Checkpoint {
    fn config_text(&self) -> Result<String> {
        serde_json::to_string(&ConfigBlock {
            model: self.model_config.clone(),
            train: self.train_config.clone(),
            dataset_path: self.dataset_path.clone(),
            dataset_mode: self.dataset_mode.to_string(),
        })
        .map_err(|e| Error::Checkpoint(e.to_string()))
    }

    /// SHA-256 of the serialized configuration, as lowercase hex.
    pub fn config_digest(&self) -> Result<String> {
        let digest = Sha256::digest(self.config_text()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let config = self.config_text()?;
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.0.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        w.0.extend_from_slice(&Sha256::digest(config.as_bytes()));
        w.str(&config);
        w.vocab(&self.entities);
        w.vocab(&self.relations);
        let p = &self.progress;
        w.u64(p.epoch as u64);
        w.u64(p.step);
        w.f64(p.best_valid_mrr.unwrap_or(f64::NAN));
        w.u64(p.best_epoch as u64);
        w.u64(p.stale_evals as u64);
        let store = &self.params.store;
        w.u64(store.len() as u64);
        for (_, param) in store.iter() {
            w.str(&param.name);
            w.u64(param.value.rows() as u64);
            w.u64(param.value.cols() as u64);
            w.0.push(DTYPE_F64);
            w.payload(&param.value);
        }
        self.adam.check_shapes(store)?;
        w.u64(self.adam.step);
        for (m, v) in self.adam.m.iter().zip(&self.adam.v) {
            w.payload(m);
            w.payload(v);
        }
        Ok(w.0)
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported format version {version}")));
        }
        let digest = r.take(32)?;
        let config = r.str()?;
        if Sha256::digest(config.as_bytes()).as_slice() != digest {
            return Err(Error::Checkpoint("config digest mismatch".into()));
        }
        let block: ConfigBlock = serde_json::from_str(config).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let entities = r.vocab()?;
        let relations = r.vocab()?;
        let epoch = r.usize()?;
        let step = r.u64()?;
        let best = r.f64()?;
        let progress = TrainProgress {
            epoch,
            step,
            best_valid_mrr: (!best.is_nan()).then_some(best),
            best_epoch: r.usize()?,
            stale_evals: r.usize()?,
        };
        let mut params = ModelParams::init(&block.model, 2 * relations.len(), block.train.seed)?;
        let count = r.usize()?;
        if count != params.store.len() {
            return Err(Error::Checkpoint(format!(
                "{count} tensors stored, model expects {}",
                params.store.len()
            )));
        }
        for param in params.store.iter_mut() {
            let name = r.str()?;
            if name != param.name {
                return Err(Error::Checkpoint(format!("expected tensor `{}`, found `{name}`", param.name)));
            }
            let (rows, cols) = (r.usize()?, r.usize()?);
            if [rows, cols] != param.value.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{name}` has shape {:?}, model expects {:?}",
                    [rows, cols],
                    param.value.shape()
                )));
            }
            let dtype = r.u8()?;
            if dtype != DTYPE_F64 {
                return Err(Error::Checkpoint(format!("tensor `{name}` has unsupported dtype {dtype}")));
            }
            param.value = r.payload(rows, cols)?;
        }
        let mut adam = AdamState::new(&params.store);
        adam.step = r.u64()?;
        for (i, (_, param)) in params.store.iter().enumerate() {
            let [rows, cols] = param.value.shape();
            adam.m[i] = r.payload(rows, cols)?;
            adam.v[i] = r.payload(rows, cols)?;
        }
        if r.pos != buf.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", buf.len() - r.pos)));
        }
        Ok(Self {
            model_config: block.model,
            train_config: block.train,
            dataset_path: block.dataset_path,
            dataset_mode: block.dataset_mode.parse()?,
            entities,
            relations,
            progress,
            params,
            adam,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&buf)
    }
}
