use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlushReason {
    Full,
    Timeout,
    End,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch<T> {
    pub samples: Vec<T>,
    pub batch_index: u64,
    pub flush_reason: FlushReason,
}

/// Size- and time-bounded batching, driven by the caller's clock.
///
/// The timeout runs from the arrival of the oldest pending sample.
#[derive(Debug)]
pub struct Batcher<T> {
    size: usize,
    timeout: Duration,
    pending: Vec<T>,
    oldest: Option<Instant>,
    next_index: u64,
}

impl<T> Batcher<T> {
    pub fn new(size: usize, timeout: Duration) -> Self {
        let size = size.max(1);
        Self {
            size,
            timeout,
            pending: Vec::with_capacity(size),
            oldest: None,
            next_index: 0,
        }
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    /// When a timeout flush becomes due, if anything is pending.
    pub fn deadline(&self) -> Option<Instant> {
        self.oldest.and_then(|t| t.checked_add(self.timeout))
    }

    pub fn push(&mut self, item: T, now: Instant) -> Option<Batch<T>> {
        self.oldest.get_or_insert(now);
        self.pending.push(item);
        (self.pending.len() >= self.size).then(|| self.flush(FlushReason::Full))
    }

    /// Flushes on timeout if the deadline has passed.
    pub fn poll(&mut self, now: Instant) -> Option<Batch<T>> {
        match self.deadline() {
            Some(d) if now >= d => Some(self.flush(FlushReason::Timeout)),
            _ => None,
        }
    }

    /// Flushes whatever is left at end of input.
    pub fn finish(&mut self) -> Option<Batch<T>> {
        (!self.pending.is_empty()).then(|| self.flush(FlushReason::End))
    }

    fn flush(&mut self, reason: FlushReason) -> Batch<T> {
        self.oldest = None;
        let batch = Batch {
            samples: std::mem::replace(&mut self.pending, Vec::with_capacity(self.size)),
            batch_index: self.next_index,
            flush_reason: reason,
        };
        self.next_index += 1;
        batch
    }
}

/// Batches a finished sample sequence (no timeouts).
pub fn form_batches<T>(samples: impl IntoIterator<Item = T>, size: usize) -> Vec<Batch<T>> {
    let mut b = Batcher::new(size, Duration::MAX);
    let now = Instant::now();
    let mut out: Vec<_> = samples.into_iter().filter_map(|s| b.push(s, now)).collect();
    out.extend(b.finish());
    out
}
