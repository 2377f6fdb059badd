//! Flat `key = value` run configuration with `[section]` headers.
//!
//! Every key must already exist in the defaults of its section; values
//! are parsed against the type of the default. `none` clears optional
//! settings.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use kgt_core::graph::SplitMode;
use kgt_core::model::ModelConfig;
use kgt_core::train::TrainConfig;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Number, Value};

use crate::UserError;

/// File name of the resolved configuration written next to a run.
pub const RESOLVED_CONFIG: &str = "config.resolved.cfg";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub path: PathBuf,
    pub mode: SplitMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verbosity {
    Quiet,
    Normal,
    Debug,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSection {
    pub out: PathBuf,
    pub device: String,
    pub verbosity: Verbosity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub run: RunSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: DataConfig {
                path: PathBuf::from("data/umls"),
                mode: SplitMode::Transductive,
            },
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            run: RunSection {
                out: PathBuf::from("runs/latest"),
                device: "cpu".into(),
                verbosity: Verbosity::Normal,
            },
        }
    }
}

fn user(msg: String) -> anyhow::Error {
    anyhow!(UserError(msg))
}

fn parse_value(default: &Value, raw: &str) -> Option<Value> {
    let raw = raw.trim();
    match default {
        Value::Bool(_) => raw.parse().ok().map(Value::Bool),
        Value::String(_) => Some(Value::String(raw.trim_matches('"').to_owned())),
        Value::Number(n) if n.is_f64() => raw.parse::<f64>().ok().and_then(Number::from_f64).map(Value::Number),
        Value::Number(_) => raw
            .parse::<u64>()
            .map(Value::from)
            .ok()
            .or_else(|| raw.parse::<f64>().ok().and_then(Number::from_f64).map(Value::Number)),
        Value::Null => {
            if raw.eq_ignore_ascii_case("none") {
                Some(Value::Null)
            } else if let Ok(v) = raw.parse::<u64>() {
                Some(Value::from(v))
            } else {
                raw.parse::<f64>().ok().and_then(Number::from_f64).map(Value::Number)
            }
        }
        _ => None,
    }
}

/// Mutable view of a configuration as a JSON tree, used while applying
/// file entries and overrides.
pub struct ConfigBuilder {
    tree: Map<String, Value>,
}

impl ConfigBuilder {
    pub fn new() -> Result<Self> {
        match serde_json::to_value(RunConfig::default())? {
            Value::Object(tree) => Ok(Self { tree }),
            _ => unreachable!("configuration serializes to an object"),
        }
    }

    pub fn set(&mut self, section: &str, key: &str, raw: &str) -> Result<()> {
        let table = self
            .tree
            .get_mut(section)
            .and_then(Value::as_object_mut)
            .ok_or_else(|| user(format!("unknown section [{section}]")))?;
        let slot = table
            .get_mut(key)
            .ok_or_else(|| user(format!("unknown key `{key}` in section [{section}]")))?;
        // Optional settings that were cleared keep accepting numbers.
        let template = if slot.is_null() { &Value::Null } else { &*slot };
        let value = parse_value(template, raw)
            .or_else(|| (raw.trim().eq_ignore_ascii_case("none")).then_some(Value::Null))
            .ok_or_else(|| user(format!("cannot parse `{}` for {section}.{key}", raw.trim())))?;
        *slot = value;
        Ok(())
    }

    /// Applies a `section.key=value` override.
    pub fn set_dotted(&mut self, spec: &str) -> Result<()> {
        let (path, value) = spec
            .split_once('=')
            .ok_or_else(|| user(format!("override `{spec}` is not of the form section.key=value")))?;
        let (section, key) = path
            .trim()
            .split_once('.')
            .ok_or_else(|| user(format!("override `{spec}` is missing a section")))?;
        self.set(section, key, value)
    }

    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        let mut section: Option<String> = None;
        for (i, line) in text.lines().enumerate() {
            let line = line.split(['#', ';']).next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = || format!("{}:{}", origin.display(), i + 1);
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| user(format!("{}: malformed section header", at())))?;
                section = Some(name.trim().to_owned());
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| user(format!("{}: expected `key = value`", at())))?;
            let Some(section) = &section else {
                return Err(user(format!("{}: `{}` appears before any section", at(), key.trim())));
            };
            self.set(section, key.trim(), value).map_err(|e| user(format!("{}: {e}", at())))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| user(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_text(&text, path)
    }

    pub fn build(self) -> Result<RunConfig> {
        let cfg: RunConfig =
            serde_json::from_value(Value::Object(self.tree)).map_err(|e| user(format!("invalid configuration: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.run.device != "cpu" {
            bail!(UserError(format!("device `{}` is not available; only `cpu` is supported", self.run.device)));
        }
        self.model.validate()?;
        self.train.validate()?;
        Ok(())
    }

    /// Settings outside the default search grids.
    pub fn off_grid(&self) -> Vec<String> {
        let mut out = self.model.off_grid();
        out.extend(self.train.off_grid());
        out
    }

    /// The configuration in the same format it is read from.
    pub fn to_text(&self) -> Result<String> {
        let Value::Object(tree) = serde_json::to_value(self)? else {
            unreachable!("configuration serializes to an object");
        };
        let mut out = String::new();
        for (section, table) in &tree {
            writeln!(out, "[{section}]")?;
            for (key, value) in table.as_object().into_iter().flatten() {
                let text = match value {
                    Value::Null => "none".to_owned(),
                    Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                writeln!(out, "{key} = {text}")?;
            }
            out.push('\n');
        }
        Ok(out)
    }

    pub fn write_resolved(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(RESOLVED_CONFIG);
        std::fs::write(&path, self.to_text()?).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig> {
        let mut b = ConfigBuilder::new()?;
        b.apply_text(text, Path::new("test.cfg"))?;
        b.build()
    }

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn sections_and_types() {
        let cfg = parse(
            "[data]\npath = /tmp/x\nmode = inductive\n\n[model]\nhidden_dim = 16 # comment\n\
             kernel_mode = full_exponential\n[train]\nlearning_rate = 1e-3\nstop_at_valid_mrr = 0.4\n",
        )
        .unwrap();
        assert_eq!(cfg.data.path, PathBuf::from("/tmp/x"));
        assert_eq!(cfg.data.mode, SplitMode::Inductive);
        assert_eq!(cfg.model.hidden_dim, 16);
        assert_eq!(cfg.train.learning_rate, 1e-3);
        assert_eq!(cfg.train.stop_at_valid_mrr, Some(0.4));
    }

    #[test]
    fn unknown_keys_and_sections_are_rejected() {
        let err = parse("[model]\nhidden = 3\n").unwrap_err();
        assert!(err.to_string().contains("unknown key `hidden`"), "{err}");
        assert!(err.chain().any(|c| c.is::<UserError>()));
        assert!(parse("[nope]\nx = 1\n").is_err());
        assert!(parse("hidden_dim = 3\n").is_err());
    }

    #[test]
    fn bad_values_are_rejected() {
        assert!(parse("[model]\nhidden_dim = many\n").is_err());
        assert!(parse("[model]\nhidden_dim = 0\n").is_err());
        assert!(parse("[model]\nkernel_mode = cubic\n").is_err());
        assert!(parse("[run]\ndevice = gpu\n").is_err());
    }

    #[test]
    fn resolved_text_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.train.learning_rate = 1e-4;
        cfg.train.max_steps_per_epoch = Some(7);
        cfg.model.layer_norm_eps = 1e-6;
        assert_eq!(parse(&cfg.to_text().unwrap()).unwrap(), cfg);
    }

    #[test]
    fn overrides_and_clearing() {
        let mut b = ConfigBuilder::new().unwrap();
        b.apply_text("[train]\nmax_steps_per_epoch = 3\n", Path::new("t")).unwrap();
        b.set_dotted("train.max_steps_per_epoch=none").unwrap();
        b.set_dotted("train.max_steps_per_epoch = 5").unwrap();
        b.set_dotted("train.seed=7").unwrap();
        let cfg = b.build().unwrap();
        assert_eq!(cfg.train.max_steps_per_epoch, Some(5));
        assert_eq!(cfg.train.seed, 7);
        assert!(ConfigBuilder::new().unwrap().set_dotted("seed=7").is_err());
    }
}
