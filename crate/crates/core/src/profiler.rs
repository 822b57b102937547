//! Producer/consumer throughput from run statistics, and the producer
//! count needed to keep one consumer busy.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::consumer::ConsumerStats;
use crate::producer::ProducerStats;

/// Runs shorter than this are too noisy to measure.
pub const MIN_WALL_TIME: f64 = 1.0;

/// Default slack applied to measured ratios just above an integer.
pub const DEFAULT_RATIO_TOLERANCE: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProfileError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("ratio undefined for producer rate {producer_rate} and consumer rate {consumer_rate}")]
    UndefinedRatio { producer_rate: f64, consumer_rate: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughputReport {
    /// Kept records per second per producer worker.
    pub producer_rate: f64,
    /// Samples per second of consumer busy time.
    pub consumer_rate: f64,
    pub recommended_ratio: Option<u64>,
    /// `consumer_rate / producer_rate` before rounding up.
    pub raw_ratio: Option<f64>,
    pub selectivity: f64,
    pub producers: usize,
    /// Set when the ratio is undefined.
    pub error: Option<String>,
}

/// Least producer count whose combined rate covers one consumer:
/// `ceil(consumer_rate / producer_rate)`.
pub fn recommend_ratio(producer_rate: f64, consumer_rate: f64) -> Result<u64, ProfileError> {
    recommend_ratio_with_tolerance(producer_rate, consumer_rate, 0.0)
}

/// Like [`recommend_ratio`], but a ratio at most `tolerance` (relative)
/// above an integer rounds down to it.
pub fn recommend_ratio_with_tolerance(
    producer_rate: f64,
    consumer_rate: f64,
    tolerance: f64,
) -> Result<u64, ProfileError> {
    let valid = |r: f64| r.is_finite() && r > 0.0;
    if !valid(producer_rate) || !valid(consumer_rate) || tolerance.is_nan() || tolerance < 0.0 {
        return Err(ProfileError::UndefinedRatio {
            producer_rate,
            consumer_rate,
        });
    }
    let ratio = (consumer_rate / producer_rate / (1.0 + tolerance)).ceil();
    Ok((ratio as u64).max(1))
}

pub fn measure_rates(
    producers: &[ProducerStats],
    consumer: &ConsumerStats,
    tolerance: f64,
) -> Result<ThroughputReport, ProfileError> {
    if producers.is_empty() {
        return Err(ProfileError::InsufficientData("no producer stats".into()));
    }
    if let Some(p) = producers.iter().find(|p| p.wall_time < MIN_WALL_TIME) {
        return Err(ProfileError::InsufficientData(format!(
            "producer {:?} ran {:.3} s (< {MIN_WALL_TIME} s)",
            p.producer_id, p.wall_time
        )));
    }
    if consumer.wall_time < MIN_WALL_TIME {
        return Err(ProfileError::InsufficientData(format!(
            "consumer ran {:.3} s (< {MIN_WALL_TIME} s)",
            consumer.wall_time
        )));
    }
    let producer_rate = producers
        .iter()
        .map(|p| p.records_kept as f64 / p.wall_time)
        .sum::<f64>()
        / producers.len() as f64;
    let consumer_rate = if consumer.busy_time > 0.0 {
        consumer.samples_processed as f64 / consumer.busy_time
    } else {
        0.0
    };
    let read: u64 = producers.iter().map(|p| p.records_read).sum();
    let kept: u64 = producers.iter().map(|p| p.records_kept).sum();
    let selectivity = if read > 0 { kept as f64 / read as f64 } else { 0.0 };
    let (recommended_ratio, error) =
        match recommend_ratio_with_tolerance(producer_rate, consumer_rate, tolerance) {
            Ok(r) => (Some(r), None),
            Err(e) => (None, Some(e.to_string())),
        };
    Ok(ThroughputReport {
        producer_rate,
        consumer_rate,
        recommended_ratio,
        raw_ratio: (producer_rate > 0.0).then(|| consumer_rate / producer_rate),
        selectivity,
        producers: producers.len(),
        error,
    })
}

/// Fraction of time a consumer serving `consumer_rate` samples/s sits idle
/// when fed by `producers` workers of `producer_rate` samples/s each, over
/// `horizon` simulated seconds. Deterministic discrete-event simulation.
pub fn simulate_idle_fraction(producer_rate: f64, consumer_rate: f64, producers: u64, horizon: f64) -> f64 {
    if producers == 0 || producer_rate <= 0.0 {
        return 1.0;
    }
    let service = 1.0 / consumer_rate;
    let gap = 1.0 / producer_rate;
    // Worker w emits at (j + 1 + w / producers) * gap, staggered within a gap.
    let per_worker = (horizon / gap).ceil() as u64 + 1;
    let mut arrivals: Vec<f64> = (0..producers)
        .flat_map(|w| (0..per_worker).map(move |j| (j as f64 + 1.0 + w as f64 / producers as f64) * gap))
        .filter(|&a| a <= horizon)
        .collect();
    arrivals.sort_by(f64::total_cmp);
    let (mut t, mut idle) = (0.0f64, 0.0f64);
    for a in arrivals {
        if t >= horizon {
            break;
        }
        if a > t {
            idle += a - t;
            t = a;
        }
        t += service;
    }
    if t < horizon {
        idle += horizon - t;
    }
    idle / horizon
}
