//! Experiment files: `[model]`, `[data]` and `[train]` sections, with
//! dot-path overrides restricted to keys that already exist.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::data::GeneratorConfig;
use crate::error::{Error, Result};
use crate::models::{Architecture, ModelSpec};
use crate::train::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Dataset directory (manifest plus `samples/`).
    pub dataset: PathBuf,
    pub seed: u64,
    pub generator: GeneratorConfig,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            dataset: PathBuf::from("data/synthetic"),
            seed: 0,
            generator: GeneratorConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub data: DataConfig,
    pub train: TrainConfig,
}

impl ExperimentConfig {
    /// Defaults for `arch`; PointNet trains for fewer iterations.
    pub fn for_architecture(arch: Architecture) -> Self {
        let mut train = TrainConfig::default();
        if arch == Architecture::PointNet {
            train.iterations = 4_000;
        }
        Self {
            model: ModelSpec::for_architecture(arch),
            data: DataConfig::default(),
            train,
        }
    }

    /// Parse `text` over architecture defaults, then apply `key=value`
    /// overrides. The architecture is resolved first, so defaults follow an
    /// overridden `model.architecture`.
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let user: Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let parsed: Vec<(Vec<String>, Value)> =
            overrides.iter().map(|o| parse_override(o)).collect::<Result<_>>()?;
        let arch_key = ["model".to_string(), "architecture".to_string()];
        let arch = parsed
            .iter()
            .rev()
            .find(|(k, _)| k.as_slice() == arch_key)
            .map(|(_, v)| v.clone())
            .or_else(|| user.get("model").and_then(|m| m.get("architecture")).cloned());
        let arch: Architecture = match arch {
            None => Architecture::PointDeepOnet,
            Some(Value::String(s)) => s.parse()?,
            Some(v) => return Err(Error::Config(format!("model.architecture must be a string, got {v}"))),
        };
        let mut doc = Table::try_from(Self::for_architecture(arch))
            .map_err(|e| Error::Config(e.to_string()))?;
        merge(&mut doc, user, "")?;
        for (path, value) in parsed {
            set_existing(&mut doc, &path, value)?;
        }
        let cfg: Self = Value::Table(doc)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, overrides).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.data.generator.validate()
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Write the effective configuration; re-loading it reproduces `self`.
    pub fn echo(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("config.toml");
        std::fs::write(&path, self.to_toml()?).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

/// Recursively overlay `src` onto `dst`, refusing keys `dst` does not have.
fn merge(dst: &mut Table, src: Table, prefix: &str) -> Result<()> {
    for (k, v) in src {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match (dst.get_mut(&k), v) {
            (None, _) => return Err(Error::Config(format!("unknown key `{path}`"))),
            (Some(Value::Table(d)), Value::Table(s)) => merge(d, s, &path)?,
            (Some(slot), v) => *slot = v,
        }
    }
    Ok(())
}

fn parse_override(text: &str) -> Result<(Vec<String>, Value)> {
    let (key, raw) = text
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{text}` is not key=value")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(Error::Config(format!("override `{text}` has an empty key")));
    }
    let raw = raw.trim();
    // Parse as a TOML value; bare words become strings.
    let value = format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    Ok((key.split('.').map(str::to_string).collect(), value))
}

fn set_existing(doc: &mut Table, path: &[String], value: Value) -> Result<()> {
    let joined = path.join(".");
    let unknown = || Error::Config(format!("unknown key `{joined}`"));
    let (last, parents) = path.split_last().ok_or_else(unknown)?;
    let mut table = doc;
    for p in parents {
        table = match table.get_mut(p) {
            Some(Value::Table(t)) => t,
            _ => return Err(unknown()),
        };
    }
    let slot = table.get_mut(last).ok_or_else(unknown)?;
    // Integers are accepted where floats are expected.
    *slot = match (&*slot, value) {
        (Value::Float(_), Value::Integer(i)) => Value::Float(i as f64),
        (_, v) => v,
    };
    Ok(())
}
