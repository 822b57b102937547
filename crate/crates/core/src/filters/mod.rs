//! Composable record filters applied before samples leave the producer.

mod builtin;
mod dedup;
mod stage;

use thiserror::Error;

pub use builtin::{
    build_stage, strip_tags, DedupStage, FilterKind, FilterSpec, MimeStage, StageRegistry,
    DERIVED_WARC_TYPE,
};
pub use dedup::{
    bloom_params, dedup_check, payload_key, probe_index, DedupKey, DedupMode, DedupState,
    MAX_HASH_COUNT,
};
pub use stage::{
    apply_stage, compose, Chain, Decision, Derived, FilterRunner, FilterStats, Sample, Stage,
    StageFailure, Verdict,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FilterError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("unknown filter kind {0:?}")]
    UnknownKind(String),
    #[error("bad params for {stage}: {detail}")]
    BadParams { stage: String, detail: String },
}
