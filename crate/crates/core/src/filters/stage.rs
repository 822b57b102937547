use std::collections::BTreeMap;

use crate::wire::{RecordEnvelope, STAGE_META_PREFIX};

/// Metadata a stage may attach to a sample.
pub type Derived = BTreeMap<String, String>;

/// A record travelling through the filter chain.
///
/// Stages see the envelope read-only; they may only add `derived` entries or
/// drop the sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub envelope: RecordEnvelope,
    pub derived: Derived,
}

impl Sample {
    pub fn new(envelope: RecordEnvelope) -> Self {
        Self {
            envelope,
            derived: Derived::new(),
        }
    }

    /// Envelope to put on the wire, with derived values as `stage_meta.*` keys.
    pub fn into_wire_envelope(self) -> RecordEnvelope {
        let mut env = self.envelope;
        for (k, v) in self.derived {
            env.insert(format!("{STAGE_META_PREFIX}{k}"), v.into_bytes());
        }
        env
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decision {
    Keep,
    /// Drop with a reason, normally the stage name.
    Drop(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Keep(Sample),
    Drop(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("stage {stage} failed: {detail}")]
pub struct StageFailure {
    pub stage: String,
    pub detail: String,
}

impl StageFailure {
    pub fn new(stage: impl Into<String>, detail: impl Into<String>) -> Self {
        Self {
            stage: stage.into(),
            detail: detail.into(),
        }
    }
}

pub trait Stage: Send + Sync {
    fn name(&self) -> &str;

    fn evaluate(&self, envelope: &RecordEnvelope, derived: &mut Derived)
        -> Result<Decision, StageFailure>;

    /// Stages with shared mutable state must see samples one at a time and
    /// in a deterministic order.
    fn is_serialized(&self) -> bool {
        false
    }
}

/// Applies one stage; a failure becomes a drop with reason `error:<stage>`.
pub fn apply_stage(stage: &dyn Stage, mut sample: Sample) -> Verdict {
    match stage.evaluate(&sample.envelope, &mut sample.derived) {
        Ok(Decision::Keep) => Verdict::Keep(sample),
        Ok(Decision::Drop(reason)) => Verdict::Drop(reason),
        Err(f) => {
            log::debug!("{f}");
            Verdict::Drop(format!("error:{}", f.stage))
        }
    }
}

/// Stages applied in order; the first drop wins. Empty is the identity.
pub struct Chain {
    stages: Vec<Box<dyn Stage>>,
}

pub fn compose(stages: Vec<Box<dyn Stage>>) -> Chain {
    Chain { stages }
}

impl Chain {
    pub fn stages(&self) -> &[Box<dyn Stage>] {
        &self.stages
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    /// Splits at the first serialized stage: the prefix can run on any
    /// thread, the suffix must run in one place in record order.
    pub fn split_parallel(self) -> (Chain, Chain) {
        let mut stages = self.stages;
        let at = stages
            .iter()
            .position(|s| s.is_serialized())
            .unwrap_or(stages.len());
        let tail = stages.split_off(at);
        (Chain { stages }, Chain { stages: tail })
    }
}

impl Stage for Chain {
    fn name(&self) -> &str {
        "chain"
    }

    fn evaluate(
        &self,
        envelope: &RecordEnvelope,
        derived: &mut Derived,
    ) -> Result<Decision, StageFailure> {
        for stage in &self.stages {
            match stage.evaluate(envelope, derived)? {
                Decision::Keep => {}
                drop @ Decision::Drop(_) => return Ok(drop),
            }
        }
        Ok(Decision::Keep)
    }

    fn is_serialized(&self) -> bool {
        self.stages.iter().any(|s| s.is_serialized())
    }
}

/// Per-run tallies: `input == kept + drops.values().sum()`.
#[derive(Debug, Clone, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct FilterStats {
    pub input: u64,
    pub kept: u64,
    pub drops: BTreeMap<String, u64>,
}

impl FilterStats {
    pub fn record(&mut self, verdict: &Verdict) {
        self.input += 1;
        match verdict {
            Verdict::Keep(_) => self.kept += 1,
            Verdict::Drop(reason) => *self.drops.entry(reason.clone()).or_default() += 1,
        }
    }

    pub fn record_drop(&mut self, reason: &str) {
        self.input += 1;
        *self.drops.entry(reason.to_string()).or_default() += 1;
    }

    pub fn dropped(&self) -> u64 {
        self.drops.values().sum()
    }

    pub fn is_balanced(&self) -> bool {
        self.input == self.kept + self.dropped()
    }

    pub fn merge(&mut self, other: &FilterStats) {
        self.input += other.input;
        self.kept += other.kept;
        for (k, v) in &other.drops {
            *self.drops.entry(k.clone()).or_default() += v;
        }
    }
}

/// A stage plus its running tallies.
pub struct FilterRunner {
    stage: Box<dyn Stage>,
    stats: FilterStats,
}

impl FilterRunner {
    pub fn new(stage: Box<dyn Stage>) -> Self {
        Self {
            stage,
            stats: FilterStats::default(),
        }
    }

    pub fn run(&mut self, sample: Sample) -> Option<Sample> {
        let verdict = apply_stage(self.stage.as_ref(), sample);
        self.stats.record(&verdict);
        match verdict {
            Verdict::Keep(s) => Some(s),
            Verdict::Drop(_) => None,
        }
    }

    pub fn stats(&self) -> &FilterStats {
        &self.stats
    }
}
