//! Pipeline configuration file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filters::{build_stage, compose, Chain, FilterSpec, StageRegistry};
use crate::wire::{DEFAULT_PORT, DEFAULT_WINDOW};

pub const DEFAULT_BATCH_SIZE: usize = 32;
pub const DEFAULT_FLUSH_TIMEOUT_MS: u64 = 1000;
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Infer,
    Train,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "infer" => Ok(Mode::Infer),
            "train" => Ok(Mode::Train),
            _ => Err(format!("unknown mode {s:?} (expected infer or train)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Consumer address, `host:port`.
    pub endpoint: String,
    pub window: u32,
    pub batch_size: usize,
    pub flush_timeout_ms: u64,
    pub mode: Mode,
    pub threshold: f64,
    pub stages: Vec<FilterSpec>,
    pub out_dir: PathBuf,
    pub parallelism: usize,
    /// Number of producer connections a consumer waits for.
    pub producers: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            endpoint: format!("127.0.0.1:{DEFAULT_PORT}"),
            window: DEFAULT_WINDOW,
            batch_size: DEFAULT_BATCH_SIZE,
            flush_timeout_ms: DEFAULT_FLUSH_TIMEOUT_MS,
            mode: Mode::Infer,
            threshold: DEFAULT_THRESHOLD,
            stages: Vec::new(),
            out_dir: PathBuf::from("out"),
            parallelism: default_parallelism(),
            producers: 1,
        }
    }
}

pub fn default_parallelism() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

const KEYS: [&str; 10] = [
    "endpoint",
    "window",
    "batch_size",
    "flush_timeout_ms",
    "mode",
    "threshold",
    "stages",
    "out_dir",
    "parallelism",
    "producers",
];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Unreadable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error at line {line}: {detail}")]
    ParseError { line: usize, detail: String },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("invalid {key}: {detail}")]
    Invalid { key: &'static str, detail: String },
    #[error("bad params for stage {index} ({kind}): {detail}")]
    BadParams {
        index: usize,
        kind: String,
        detail: String,
    },
}

impl PipelineConfig {
    /// Checks scalar bounds and builds every stage once.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |key, detail: &str| ConfigError::Invalid {
            key,
            detail: detail.to_string(),
        };
        if self.window < 1 {
            return Err(invalid("window", "must be >= 1"));
        }
        if self.batch_size < 1 {
            return Err(invalid("batch_size", "must be >= 1"));
        }
        if self.flush_timeout_ms < 1 {
            return Err(invalid("flush_timeout_ms", "must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(invalid("threshold", "must be within [0, 1]"));
        }
        if self.parallelism < 1 {
            return Err(invalid("parallelism", "must be >= 1"));
        }
        if self.endpoint.rsplit_once(':').is_none_or(|(_, p)| p.parse::<u16>().is_err()) {
            return Err(invalid("endpoint", "expected host:port"));
        }
        self.chain().map(|_| ())
    }

    pub fn chain(&self) -> Result<Chain, ConfigError> {
        self.chain_with(&StageRegistry::default())
    }

    pub fn chain_with(&self, registry: &StageRegistry) -> Result<Chain, ConfigError> {
        let stages = self
            .stages
            .iter()
            .enumerate()
            .map(|(index, spec)| {
                registry.build(spec).map_err(|e| ConfigError::BadParams {
                    index,
                    kind: spec.kind.clone(),
                    detail: e.to_string(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(compose(stages))
    }

    /// The dedup spec used before the training hook: the first dedup stage
    /// in `stages`, or exact dedup.
    pub fn train_dedup_spec(&self) -> FilterSpec {
        self.stages
            .iter()
            .find(|s| s.kind == "dedup")
            .cloned()
            .unwrap_or_else(|| FilterSpec::new(crate::filters::FilterKind::Dedup))
    }

    pub fn flush_timeout(&self) -> std::time::Duration {
        std::time::Duration::from_millis(self.flush_timeout_ms)
    }

    /// Pretty JSON with every default filled in.
    pub fn dump(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

pub fn parse_config_str(text: &str) -> Result<PipelineConfig, ConfigError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| ConfigError::ParseError {
        line: e.line(),
        detail: e.to_string(),
    })?;
    let Some(obj) = value.as_object() else {
        return Err(ConfigError::ParseError {
            line: 1,
            detail: "top level must be an object".into(),
        });
    };
    if let Some(k) = obj.keys().find(|k| !KEYS.contains(&k.as_str())) {
        return Err(ConfigError::UnknownKey(k.clone()));
    }
    // Typed parse from text so errors keep their line numbers.
    let config: PipelineConfig = serde_json::from_str(text).map_err(|e| ConfigError::ParseError {
        line: e.line(),
        detail: e.to_string(),
    })?;
    config.validate()?;
    Ok(config)
}

pub fn parse_config(path: impl AsRef<Path>) -> Result<PipelineConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Unreadable {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config_str(&text)
}

/// Checks one spec in isolation, as `parse_config` does for each stage.
pub fn check_stage(spec: &FilterSpec) -> Result<(), ConfigError> {
    build_stage(spec).map(|_| ()).map_err(|e| ConfigError::BadParams {
        index: 0,
        kind: spec.kind.clone(),
        detail: e.to_string(),
    })
}
