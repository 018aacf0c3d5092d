//! Run settings and the flat `section.field = value` config format.
//!
//! Sections: `run`, `ingest`, `hasher`, `n_model`, `d_model`, `iterative`,
//! `classifier` (the iterative model's network) and `synth`. The bare key
//! `m_vocab` sets the vocabulary size everywhere at once. Blank lines and
//! lines starting with `#` are ignored.

use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::synth::SynthConfig;
use crate::error::{Error, Result};
use crate::ingest::IngestConfig;
use crate::iterative::{IterativeConfig, RetainBase};
use crate::lstm::{ModelConfig, OptimizerKind};
use crate::scoring::Aggregation;
use crate::tokenize::HasherConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Online interval width; infinite means one offline interval.
    pub interval_minutes: f64,
    /// Mixture-model epochs run on each interval.
    pub d_epochs_per_interval: usize,
    pub n_train_fraction: f64,
    pub n_val_fraction: f64,
    pub d_train_fraction: f64,
    pub d_val_fraction: f64,
    pub seed: u64,
    pub alpha: f64,
    pub rejection_ratio: f64,
    pub aggregation: Aggregation,
    /// Histogram smoothing for both sides.
    pub smoothing: f64,
    /// Rebuild the mixture model (with a fresh embedding transfer) at every
    /// interval instead of continuing training.
    pub restart_d: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            interval_minutes: 1.0,
            d_epochs_per_interval: 1,
            n_train_fraction: 0.8,
            n_val_fraction: 0.2,
            d_train_fraction: 0.9,
            d_val_fraction: 0.1,
            seed: 0,
            alpha: 0.6,
            rejection_ratio: 0.5,
            aggregation: Aggregation::Mean,
            smoothing: 1.0,
            restart_d: false,
        }
    }
}

impl RunConfig {
    /// Interval presets in minutes.
    pub const INTERVAL_PRESETS: [f64; 5] = [1.0, 2.0, 5.0, 10.0, f64::INFINITY];

    pub fn validate(&self) -> Result<()> {
        for (name, a, b) in [
            ("n", self.n_train_fraction, self.n_val_fraction),
            ("d", self.d_train_fraction, self.d_val_fraction),
        ] {
            let ok = a > 0.0 && a < 1.0 && b > 0.0 && b < 1.0 && a + b <= 1.0 + 1e-12;
            if !ok {
                return Err(Error::Config(format!(
                    "{name} split fractions {a}/{b} must lie in (0, 1) and sum to at most 1"
                )));
            }
        }
        if !(self.interval_minutes > 0.0) {
            return Err(Error::Config("interval_minutes must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        if !(0.0..=1.0).contains(&self.rejection_ratio) {
            return Err(Error::Config(format!("rejection_ratio {} outside [0, 1]", self.rejection_ratio)));
        }
        if !(self.smoothing >= 0.0 && self.smoothing.is_finite()) {
            return Err(Error::Config("smoothing must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Every configurable value of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub run: RunConfig,
    pub ingest: IngestConfig,
    pub hasher: HasherConfig,
    pub n_model: ModelConfig,
    pub d_model: ModelConfig,
    pub iterative: IterativeConfig,
    pub synth: SynthConfig,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            run: RunConfig::default(),
            ingest: IngestConfig::default(),
            hasher: HasherConfig::default(),
            n_model: ModelConfig::normal_default(),
            d_model: ModelConfig::mixture_default(),
            iterative: IterativeConfig::default(),
            synth: SynthConfig::default(),
        }
    }
}

trait ConfigValue: Sized {
    fn parse_value(s: &str) -> Option<Self>;
}

macro_rules! from_str_value {
    ($($t:ty),*) => {$(
        impl ConfigValue for $t {
            fn parse_value(s: &str) -> Option<Self> {
                s.parse().ok()
            }
        }
    )*};
}

from_str_value!(f64, usize, bool, Aggregation);

impl ConfigValue for u64 {
    fn parse_value(s: &str) -> Option<Self> {
        match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
            Some(hex) => u64::from_str_radix(hex, 16).ok(),
            None => s.parse().ok(),
        }
    }
}

impl ConfigValue for OptimizerKind {
    fn parse_value(s: &str) -> Option<Self> {
        match s {
            "adam" => Some(OptimizerKind::Adam),
            "sgd" => Some(OptimizerKind::Sgd),
            _ => None,
        }
    }
}

impl ConfigValue for RetainBase {
    fn parse_value(s: &str) -> Option<Self> {
        match s {
            "current" => Some(RetainBase::Current),
            "all" => Some(RetainBase::All),
            _ => None,
        }
    }
}

fn parse<T: ConfigValue>(key: &str, value: &str) -> Result<T> {
    T::parse_value(value).ok_or_else(|| Error::Config(format!("invalid value {value:?} for {key}")))
}

/// Assigns `value` to the named field if the struct has it; `Ok(false)`
/// when the field is unknown.
macro_rules! assign {
    ($target:expr, $field:expr, $key:expr, $value:expr, [$($name:ident),* $(,)?]) => {
        match $field {
            $(stringify!($name) => {
                $target.$name = parse($key, $value)?;
                Ok(true)
            })*
            _ => Ok(false),
        }
    };
}

fn set_model(m: &mut ModelConfig, field: &str, key: &str, value: &str) -> Result<bool> {
    assign!(m, field, key, value, [
        m_vocab, embed_dim, hidden_dim, layers, learning_rate, batch_size, epochs, seed, optimizer, clip_norm,
    ])
}

impl Settings {
    /// Sets one `section.field` (or bare `m_vocab`) from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim().trim_matches('"');
        if key == "m_vocab" {
            let m: usize = parse(key, value)?;
            self.hasher.m_vocab = m;
            self.n_model.m_vocab = m;
            self.d_model.m_vocab = m;
            self.iterative.model.m_vocab = m;
            return Ok(());
        }
        let (section, field) = key
            .split_once('.')
            .ok_or_else(|| Error::Config(format!("config key {key:?} needs a section prefix")))?;
        let known = match section {
            "run" => {
                if field == "interval_minutes" {
                    self.ingest.interval_minutes = parse(key, value)?;
                }
                assign!(self.run, field, key, value, [
                    interval_minutes, d_epochs_per_interval, n_train_fraction, n_val_fraction,
                    d_train_fraction, d_val_fraction, seed, alpha, rejection_ratio, aggregation,
                    smoothing, restart_d,
                ])
            }
            "ingest" => {
                if field == "interval_minutes" {
                    self.run.interval_minutes = parse(key, value)?;
                }
                assign!(self.ingest, field, key, value, [seq_len, epsilon, interval_minutes])
            }
            "hasher" => assign!(self.hasher, field, key, value, [m_vocab, hash_seed, time_bin_ms, len_bin]),
            "n_model" => set_model(&mut self.n_model, field, key, value),
            "d_model" => set_model(&mut self.d_model, field, key, value),
            "classifier" => set_model(&mut self.iterative.model, field, key, value),
            "iterative" => assign!(self.iterative, field, key, value, [
                alpha, retain_fraction, max_iterations, inner_epochs, seed, restart, retain_base, tolerance,
            ]),
            "synth" => assign!(self.synth, field, key, value, [
                n_normal, n_mixture, alpha, seq_len, n_templates, n_static_pairs, divergence, markov,
                duration_minutes, seed,
            ]),
            _ => Ok(false),
        }?;
        if !known {
            return Err(Error::Config(format!("unknown config key {key:?}")));
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (key, value) in parse_kv(text)? {
            self.set(&key, &value)?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut s = Settings::default();
        s.apply_text(text)?;
        Ok(s)
    }

    /// Seeds every random component from one value.
    pub fn set_seed(&mut self, seed: u64) {
        self.run.seed = seed;
        self.synth.seed = seed;
        self.n_model.seed = seed;
        self.d_model.seed = seed.wrapping_add(1);
        self.iterative.seed = seed;
        self.iterative.model.seed = seed.wrapping_add(2);
    }

    pub fn validate(&self) -> Result<()> {
        self.run.validate()?;
        self.ingest.validate()?;
        self.hasher.validate()?;
        self.n_model.validate()?;
        self.d_model.validate()?;
        self.iterative.validate()?;
        self.synth.validate()?;
        let m = self.hasher.m_vocab;
        for (name, cfg) in [("n_model", &self.n_model), ("d_model", &self.d_model), ("classifier", &self.iterative.model)] {
            if cfg.m_vocab != m {
                return Err(Error::Vocabulary(format!(
                    "{name}.m_vocab {} differs from hasher.m_vocab {m}",
                    cfg.m_vocab
                )));
            }
        }
        if self.n_model.embed_dim != self.d_model.embed_dim {
            return Err(Error::Config("n_model and d_model must share embed_dim for the embedding transfer".into()));
        }
        Ok(())
    }

    /// Small models and the synthetic defaults (`m_vocab` 256, `T` 50), sized
    /// for a single CPU core.
    pub fn desk_scale() -> Self {
        let mut s = Settings::default();
        let model = ModelConfig {
            m_vocab: 256,
            embed_dim: 8,
            hidden_dim: 16,
            layers: 2,
            learning_rate: 0.02,
            batch_size: 16,
            epochs: 4,
            seed: 0,
            optimizer: OptimizerKind::Adam,
            clip_norm: 5.0,
        };
        s.hasher.m_vocab = 256;
        s.ingest.seq_len = 50;
        s.n_model = model;
        s.d_model = ModelConfig {
            learning_rate: 0.01,
            seed: 1,
            ..model
        };
        s.run.d_epochs_per_interval = 3;
        s.iterative.model = ModelConfig {
            learning_rate: 0.01,
            seed: 2,
            ..model
        };
        // One epoch per round leaves the first pseudo-labeled classifier too
        // weak on some seeds; two is enough for a stable first selection.
        s.iterative.inner_epochs = 2;
        s.iterative.max_iterations = 4;
        s
    }
}

/// Parses `key = value` lines in order. Later duplicates win when applied.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Renders every setting as `key = value` lines that `from_text` accepts.
pub fn render(settings: &Settings) -> String {
    let value = serde_json::to_value(settings).expect("settings serialize");
    let mut lines = BTreeMap::new();
    if let serde_json::Value::Object(sections) = value {
        for (section, fields) in sections {
            let serde_json::Value::Object(fields) = fields else { continue };
            for (field, v) in fields {
                let (section, field) = match (section.as_str(), field.as_str()) {
                    ("iterative", "model") => {
                        if let serde_json::Value::Object(m) = v {
                            for (f, mv) in m {
                                lines.insert(format!("classifier.{f}"), text_of(&mv));
                            }
                        }
                        continue;
                    }
                    (s, f) => (s.to_string(), f.to_string()),
                };
                lines.insert(format!("{section}.{field}"), text_of(&v));
            }
        }
    }
    // Infinite widths serialize as null.
    for key in ["run.interval_minutes", "ingest.interval_minutes"] {
        if let Some(v) = lines.get_mut(key) {
            if v == "null" {
                *v = "inf".into();
            }
        }
    }
    lines.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

fn text_of(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

impl FromStr for Settings {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Settings::from_text(s)
    }
}
