//! Flat "key = value" run configuration. One schema covers the classifier,
//! patcher, and dataset-generator knobs (namespaced as `gnn.*`, `patcher.*`,
//! `synth.*`), plus the shared `data`, `out`, `seed`, and `threads` keys.
//! Command-line flags feed the same setter as file lines, so "flags override
//! file" falls out of apply order.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::gnn::TrainConfig;
use crate::patcher::{AnchorSet, PatchTrainConfig};
use crate::synth::SynthConfig;

/// Every tunable of a run, fully resolved (defaults, then file, then flags).
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// One seed drives every module; the per-module seed fields are set
    /// from it when a command builds its sub-config.
    pub seed: u64,
    pub threads: usize,
    pub gnn: TrainConfig,
    pub patcher: PatchTrainConfig,
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: None,
            out: None,
            seed: 0,
            threads: 1,
            gnn: TrainConfig::default(),
            patcher: PatchTrainConfig::default(),
            synth: SynthConfig::default(),
        }
    }
}

fn parse_as<T: FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.parse().map_err(|_| {
        Error::Config(format!(
            "key '{key}': cannot parse {raw:?} as {}",
            std::any::type_name::<T>()
        ))
    })
}

fn parse_bool(key: &str, raw: &str) -> Result<bool> {
    match raw {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::Config(format!(
            "key '{key}': expected true or false, got {raw:?}"
        ))),
    }
}

impl RunConfig {
    /// Assigns one key. Unknown keys are errors; so are values outside the
    /// key's type. This is the single write path for files and flags alike.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        let raw = raw.trim();
        let raw = raw
            .strip_prefix('"')
            .and_then(|r| r.strip_suffix('"'))
            .unwrap_or(raw);
        match key {
            "data" => self.data = Some(PathBuf::from(raw)),
            "out" => self.out = Some(PathBuf::from(raw)),
            "seed" => self.seed = parse_as(key, raw)?,
            "threads" => self.threads = parse_as(key, raw)?,

            "gnn.hidden" => self.gnn.hidden = parse_as(key, raw)?,
            "gnn.lr" => self.gnn.learning_rate = parse_as(key, raw)?,
            "gnn.weight_decay" => self.gnn.weight_decay = parse_as(key, raw)?,
            "gnn.epochs" => self.gnn.epochs = parse_as(key, raw)?,
            "gnn.patience" => self.gnn.patience = parse_as(key, raw)?,
            "gnn.dropout" => self.gnn.dropout = parse_as(key, raw)?,

            "patcher.strength" => self.patcher.strength = parse_as(key, raw)?,
            "patcher.steps" => self.patcher.steps = Some(parse_as(key, raw)?),
            "patcher.samples" => self.patcher.samples = parse_as(key, raw)?,
            "patcher.batch" => self.patcher.batch_size = parse_as(key, raw)?,
            "patcher.accum" => self.patcher.accumulation = parse_as(key, raw)?,
            "patcher.hidden" => self.patcher.hidden = parse_as(key, raw)?,
            "patcher.lr" => self.patcher.learning_rate = parse_as(key, raw)?,
            "patcher.weight_decay" => self.patcher.weight_decay = parse_as(key, raw)?,
            "patcher.patience" => self.patcher.patience = parse_as(key, raw)?,
            "patcher.max_epochs" => self.patcher.max_epochs = parse_as(key, raw)?,
            "patcher.anchors" => self.patcher.anchors = raw.parse::<AnchorSet>()?,
            "patcher.detach" => self.patcher.detach_between_steps = parse_bool(key, raw)?,

            "synth.n" => self.synth.n = parse_as(key, raw)?,
            "synth.classes" => self.synth.classes = parse_as(key, raw)?,
            "synth.p_in" => self.synth.p_in = parse_as(key, raw)?,
            "synth.p_out" => self.synth.p_out = parse_as(key, raw)?,
            "synth.gamma" => self.synth.gamma = parse_as(key, raw)?,
            "synth.feature_dim" => self.synth.feature_dim = parse_as(key, raw)?,
            "synth.sigma" => self.synth.sigma = parse_as(key, raw)?,

            _ => {
                return Err(Error::Config(format!("unknown configuration key '{key}'")));
            }
        }
        Ok(())
    }

    /// Applies a config file on top of `self`. Lines are `key = value`;
    /// blank lines and `#` comments are skipped; a key may appear once.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut seen = std::collections::BTreeSet::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "{}:{}: expected 'key = value', got {line:?}",
                    path.display(),
                    lineno + 1
                ))
            })?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!(
                    "{}:{}: duplicate key '{key}'",
                    path.display(),
                    lineno + 1
                )));
            }
            self.set(key, value).map_err(|e| {
                // Re-wrap with the file location, without stacking prefixes.
                let msg = match &e {
                    Error::Config(m) | Error::InvalidArg(m) => m.clone(),
                    other => other.to_string(),
                };
                Error::Config(format!("{}:{}: {msg}", path.display(), lineno + 1))
            })?;
        }
        Ok(())
    }

    /// Defaults, overlaid with `config_path` if given, overlaid with the
    /// `(key, value)` overrides in order. Flags go last, so they win.
    pub fn load(config_path: Option<&Path>, overrides: &[(&str, String)]) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = config_path {
            cfg.apply_file(path)?;
        }
        for (key, value) in overrides {
            cfg.set(key, value)?;
        }
        Ok(cfg)
    }

    /// Full resolved key set with typed JSON values, for the run manifest.
    /// serde_json maps are sorted, so serialization is deterministic.
    pub fn to_map(&self) -> Map<String, Value> {
        let mut m = Map::new();
        let path_or_null = |p: &Option<PathBuf>| match p {
            Some(p) => json!(p.display().to_string()),
            None => Value::Null,
        };
        m.insert("data".into(), path_or_null(&self.data));
        m.insert("out".into(), path_or_null(&self.out));
        m.insert("seed".into(), json!(self.seed));
        m.insert("threads".into(), json!(self.threads));

        m.insert("gnn.hidden".into(), json!(self.gnn.hidden));
        m.insert("gnn.lr".into(), json!(self.gnn.learning_rate));
        m.insert("gnn.weight_decay".into(), json!(self.gnn.weight_decay));
        m.insert("gnn.epochs".into(), json!(self.gnn.epochs));
        m.insert("gnn.patience".into(), json!(self.gnn.patience));
        m.insert("gnn.dropout".into(), json!(self.gnn.dropout));

        m.insert("patcher.strength".into(), json!(self.patcher.strength));
        m.insert(
            "patcher.steps".into(),
            match self.patcher.steps {
                Some(s) => json!(s),
                None => Value::Null,
            },
        );
        m.insert("patcher.samples".into(), json!(self.patcher.samples));
        m.insert("patcher.batch".into(), json!(self.patcher.batch_size));
        m.insert("patcher.accum".into(), json!(self.patcher.accumulation));
        m.insert("patcher.hidden".into(), json!(self.patcher.hidden));
        m.insert("patcher.lr".into(), json!(self.patcher.learning_rate));
        m.insert(
            "patcher.weight_decay".into(),
            json!(self.patcher.weight_decay),
        );
        m.insert("patcher.patience".into(), json!(self.patcher.patience));
        m.insert("patcher.max_epochs".into(), json!(self.patcher.max_epochs));
        m.insert(
            "patcher.anchors".into(),
            json!(self.patcher.anchors.to_string()),
        );
        m.insert(
            "patcher.detach".into(),
            json!(self.patcher.detach_between_steps),
        );

        m.insert("synth.n".into(), json!(self.synth.n));
        m.insert("synth.classes".into(), json!(self.synth.classes));
        m.insert("synth.p_in".into(), json!(self.synth.p_in));
        m.insert("synth.p_out".into(), json!(self.synth.p_out));
        m.insert("synth.gamma".into(), json!(self.synth.gamma));
        m.insert("synth.feature_dim".into(), json!(self.synth.feature_dim));
        m.insert("synth.sigma".into(), json!(self.synth.sigma));
        m
    }

    /// The classifier sub-config with the run seed stamped in.
    pub fn gnn_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.gnn.clone()
        }
    }

    /// The patcher sub-config with the run seed stamped in.
    pub fn patcher_config(&self) -> PatchTrainConfig {
        PatchTrainConfig {
            seed: self.seed,
            ..self.patcher.clone()
        }
    }

    /// The generator sub-config with the run seed stamped in.
    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            seed: self.seed,
            ..self.synth.clone()
        }
    }
}
