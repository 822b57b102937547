use std::time::Duration;

use sha2::{Digest, Sha256};

use crate::wire::RecordEnvelope;

pub const LABEL_POS: &str = "pos";
pub const LABEL_NEG: &str = "neg";

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceResult {
    pub record_id: String,
    pub score: f64,
    pub label: String,
    pub payload_sha256: [u8; 32],
    /// Set by the sink once the payload is stored.
    pub stored_path: Option<String>,
}

impl InferenceResult {
    pub fn passed(&self) -> bool {
        self.label == LABEL_POS
    }
}

/// Scores a batch; one result per sample, in sample order.
pub trait Model: Send {
    fn infer(&mut self, samples: &[RecordEnvelope]) -> Vec<InferenceResult>;
}

/// First eight digest bytes as a big-endian integer, scaled into `[0, 1)`.
pub fn stub_score(digest: &[u8; 32]) -> f64 {
    let word = u64::from_be_bytes(digest[..8].try_into().unwrap());
    word as f64 / 18_446_744_073_709_551_616.0
}

pub fn label_for(score: f64, threshold: f64) -> &'static str {
    if score >= threshold {
        LABEL_POS
    } else {
        LABEL_NEG
    }
}

pub fn stub_infer_one(env: &RecordEnvelope, threshold: f64) -> InferenceResult {
    let digest: [u8; 32] = Sha256::digest(env.payload()).into();
    let score = stub_score(&digest);
    InferenceResult {
        record_id: env.record_id(),
        score,
        label: label_for(score, threshold).to_string(),
        payload_sha256: digest,
        stored_path: None,
    }
}

pub fn stub_model_infer(samples: &[RecordEnvelope], threshold: f64) -> Vec<InferenceResult> {
    samples.iter().map(|e| stub_infer_one(e, threshold)).collect()
}

/// Deterministic stand-in for a real model, with an optional artificial
/// cost per sample.
#[derive(Debug, Clone)]
pub struct StubModel {
    pub threshold: f64,
    pub per_sample: Duration,
}

impl StubModel {
    pub fn new(threshold: f64) -> Self {
        Self {
            threshold,
            per_sample: Duration::ZERO,
        }
    }

    pub fn with_cost(mut self, per_sample: Duration) -> Self {
        self.per_sample = per_sample;
        self
    }
}

impl Model for StubModel {
    fn infer(&mut self, samples: &[RecordEnvelope]) -> Vec<InferenceResult> {
        if !self.per_sample.is_zero() {
            std::thread::sleep(self.per_sample * samples.len() as u32);
        }
        stub_model_infer(samples, self.threshold)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(id: &str, payload: &[u8]) -> RecordEnvelope {
        RecordEnvelope::record(id, "http://a/", "x/y", payload.to_vec())
    }

    #[test]
    fn empty_payload_score() {
        let r = stub_infer_one(&env("e", b""), 0.5);
        assert_eq!(&r.payload_sha256[..8], &[0xe3, 0xb0, 0xc4, 0x42, 0x98, 0xfc, 0x1c, 0x14]);
        // 0xE3B0C44298FC1C14 / 2^64, computed at high precision
        assert!((r.score - 0.889_415_994_891_337_4).abs() < 1e-15);
        assert_eq!(r.label, LABEL_POS);
    }

    #[test]
    fn zero_threshold_keeps_all() {
        let samples: Vec<_> = (0..50).map(|i| env(&i.to_string(), &[i as u8; 3])).collect();
        assert!(stub_model_infer(&samples, 0.0).iter().all(|r| r.label == LABEL_POS));
    }

    #[test]
    fn order_independent() {
        let samples: Vec<_> = (0..20).map(|i| env(&i.to_string(), &[i as u8])).collect();
        let mut reversed = samples.clone();
        reversed.reverse();
        let mut a = stub_model_infer(&samples, 0.5);
        let mut b = stub_model_infer(&reversed, 0.5);
        a.sort_by(|x, y| x.record_id.cmp(&y.record_id));
        b.sort_by(|x, y| x.record_id.cmp(&y.record_id));
        assert_eq!(a, b);
    }
}
