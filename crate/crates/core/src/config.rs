//! Run configuration: a flat `key=value` file (or JSON), overridable per key.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::datamodel::{SyntheticConfig, DEFAULT_GAP_MS};
use crate::error::{Error, Result};
use crate::eval::Gain;
use crate::listnet::{ListLoss, RankConfig, RankTrainParams, DEFAULT_ENUMERATION_CAP};
use crate::nn::PoolMode;
use crate::pipeline::TrainSettings;
use crate::sie::{FeatureMask, ReprItem, SieConfig, SieTrainParams};

/// Environment variable overriding `seed`.
pub const SEED_ENV: &str = "SESSIONRANK_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub events: PathBuf,
    pub model_dir: PathBuf,
    pub report_dir: PathBuf,

    pub embedding_dim: usize,
    pub mlp_widths: Vec<usize>,
    pub proj_widths: Vec<usize>,
    /// S-IE learning rate.
    pub eta: f64,
    /// List-wise learning rate.
    pub rank_eta: f64,
    pub neg_ratio: usize,
    pub purchase_copies: usize,
    pub k: usize,
    /// S-IE passes over the samples.
    pub epochs: usize,
    /// List-wise passes over the training lists (the outer iteration count T).
    pub rank_epochs: usize,
    pub seed: u64,
    pub pooling: PoolMode,
    pub enumeration_cap: usize,
    pub repr_item: ReprItem,
    pub separate_view_table: bool,
    pub purchases_as_clicks: bool,
    pub use_user_embedding: bool,
    pub label_temperature: f64,
    pub gain: Gain,
    pub gap_ms: i64,
    /// Evaluation threads; 0 uses every core.
    pub threads: usize,

    pub synthetic: SyntheticConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            events: "events.jsonl".into(),
            model_dir: "models".into(),
            report_dir: "reports".into(),
            embedding_dim: 200,
            mlp_widths: vec![800, 200, 100],
            proj_widths: vec![100, 100],
            eta: 0.001,
            rank_eta: 0.001,
            neg_ratio: 5,
            purchase_copies: 3,
            k: 10,
            epochs: 10,
            rank_epochs: 10,
            seed: 42,
            pooling: PoolMode::Average,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
            repr_item: ReprItem::Zero,
            separate_view_table: false,
            purchases_as_clicks: false,
            use_user_embedding: false,
            label_temperature: 1.0,
            gain: Gain::Linear,
            gap_ms: DEFAULT_GAP_MS,
            threads: 0,
            synthetic: SyntheticConfig::default(),
        }
    }
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    match v {
        Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        Value::Array(items) => {
            let parts: Vec<String> = items.iter().map(scalar_text).collect();
            out.push((prefix.to_owned(), parts.join(",")));
        }
        other => out.push((prefix.to_owned(), scalar_text(other))),
    }
}

fn scalar_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn parse_like(template: &Value, key: &str, raw: &str) -> Result<Value> {
    let bad = || Error::Config(format!("cannot parse {raw:?} for key {key}"));
    Ok(match template {
        Value::Bool(_) => Value::Bool(raw.parse().map_err(|_| bad())?),
        Value::Number(_) => {
            let n: serde_json::Number = serde_json::from_str(raw).map_err(|_| bad())?;
            Value::Number(n)
        }
        Value::Array(_) => {
            let items = raw
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| serde_json::from_str::<Value>(s).map_err(|_| bad()))
                .collect::<Result<Vec<_>>>()?;
            Value::Array(items)
        }
        Value::String(_) => Value::String(raw.to_owned()),
        _ => return Err(bad()),
    })
}

impl RunConfig {
    /// Every key in `key=value` form with its default, in file order.
    pub fn default_entries() -> Vec<(String, String)> {
        RunConfig::default().entries()
    }

    pub fn entries(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        flatten("", &serde_json::to_value(self).expect("config serializes"), &mut out);
        out
    }

    pub fn to_kv_string(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// Sets one dotted key, parsing `raw` according to the key's current type.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        let mut root = serde_json::to_value(&*self)?;
        let mut slot = &mut root;
        for part in key.split('.') {
            slot = slot
                .as_object_mut()
                .and_then(|m: &mut Map<String, Value>| m.get_mut(part))
                .ok_or_else(|| Error::Config(format!("unknown config key {key:?}")))?;
        }
        *slot = parse_like(slot, key, raw.trim())?;
        *self = serde_json::from_value(root).map_err(|e| Error::Config(format!("{key}: {e}")))?;
        Ok(())
    }

    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", n + 1)))?;
            cfg.set(k.trim(), v)?;
        }
        Ok(cfg)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file; JSON when it starts with `{`, `key=value` otherwise.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        if text.trim_start().starts_with('{') {
            Self::from_json_str(&text)
        } else {
            Self::from_kv_str(&text)
        }
    }

    /// Applies `SESSIONRANK_SEED` when set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        for (name, eta) in [("eta", self.eta), ("rank_eta", self.rank_eta)] {
            if !(eta > 0.0 && eta.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {eta}")));
            }
        }
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if self.gap_ms <= 0 {
            return Err(Error::Config("gap_ms must be positive".into()));
        }
        if !(self.label_temperature > 0.0 && self.label_temperature.is_finite()) {
            return Err(Error::Config("label_temperature must be positive".into()));
        }
        let s = self.sie_config();
        s.validate()?;
        if self.proj_widths.last() != Some(&s.representation_dim()) {
            return Err(Error::Config(format!(
                "last proj_widths entry must equal the last mlp_widths entry ({})",
                s.representation_dim()
            )));
        }
        if self.proj_widths.contains(&0) {
            return Err(Error::Config("proj_widths must be positive".into()));
        }
        self.synthetic.validate().map_err(|e| Error::Config(e.to_string()))
    }

    pub fn sie_config(&self) -> SieConfig {
        SieConfig {
            embedding_dim: self.embedding_dim,
            mlp_widths: self.mlp_widths.clone(),
            pooling: self.pooling,
            features: FeatureMask::default(),
            separate_view_table: self.separate_view_table,
            purchases_as_clicks: self.purchases_as_clicks,
            use_user_embedding: self.use_user_embedding,
            repr_item: self.repr_item,
        }
    }

    pub fn rank_config(&self) -> RankConfig {
        RankConfig {
            proj_widths: self.proj_widths.clone(),
            loss: ListLoss {
                k: self.k,
                enumeration_cap: self.enumeration_cap,
                label_temperature: self.label_temperature,
            },
        }
    }

    pub fn train_settings(&self) -> TrainSettings {
        TrainSettings {
            sie: self.sie_config(),
            sie_train: SieTrainParams {
                eta: self.eta,
                epochs: self.epochs,
                seed: self.seed,
                neg_ratio: self.neg_ratio,
                purchase_copies: self.purchase_copies,
            },
            rank: self.rank_config(),
            rank_train: RankTrainParams {
                eta: self.rank_eta,
                epochs: self.rank_epochs,
                seed: self.seed.wrapping_add(1),
            },
        }
    }
}
