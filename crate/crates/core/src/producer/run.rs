use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::mpsc::{self, Receiver, SyncSender};
use std::sync::Arc;
use std::time::{Duration, Instant};

use log::{debug, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ProducerError;
use crate::config::PipelineConfig;
use crate::filters::{apply_stage, Chain, FilterStats, Sample, Verdict, DERIVED_WARC_TYPE};
use crate::ingest::record_to_sample;
use crate::linker::{join_pairs, UriIndex};
use crate::warc::{iterate_records, WarcType};
use crate::wire::{
    encode_envelope_limited, DataSender, SenderOptions, Tracer, WireError,
    DEFAULT_HANDSHAKE_TIMEOUT, DEFAULT_MAX_FRAME_PAYLOAD, FRAME_HEADER_LEN,
};

/// Drop reason for envelopes over the frame payload limit.
pub const DROP_TOO_LARGE: &str = "too_large";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProducerStats {
    pub producer_id: String,
    pub records_read: u64,
    pub records_kept: u64,
    /// Drop counts by reason (stage name, `error:<stage>`, or ingest reason).
    pub drops: BTreeMap<String, u64>,
    /// Malformed records skipped by the reader; not part of `records_read`.
    pub records_skipped: u64,
    pub files_unreadable: u64,
    pub bytes_sent: u64,
    pub data_frames_sent: u64,
    /// Seconds.
    pub wall_time: f64,
    /// `records_kept / wall_time`.
    pub post_filter_rate: f64,
    /// SHA-256 over the DATA payloads in send order.
    pub stream_sha256: String,
}

impl ProducerStats {
    pub fn dropped(&self) -> u64 {
        self.drops.values().sum()
    }

    /// `records_read == records_kept + sum(drops)`.
    pub fn is_balanced(&self) -> bool {
        self.records_read == self.records_kept + self.dropped()
    }
}

/// Where a producer's samples come from.
#[derive(Debug, Clone, Default)]
pub enum Source {
    /// One sample per HTTP response record.
    #[default]
    Records,
    /// One sample per (page, linked image) pair found through the index.
    Pairs(Arc<UriIndex>),
}

#[derive(Debug, Clone)]
pub struct ProducerOptions {
    pub producer_id: String,
    pub parallelism: usize,
    /// Capacity of each reader's handoff queue.
    pub window: u32,
    pub source: Source,
    pub max_frame_payload: usize,
    pub handshake_timeout: Duration,
    pub tracer: Tracer,
}

impl Default for ProducerOptions {
    fn default() -> Self {
        Self {
            producer_id: "producer-0".into(),
            parallelism: 1,
            window: crate::wire::DEFAULT_WINDOW,
            source: Source::Records,
            max_frame_payload: DEFAULT_MAX_FRAME_PAYLOAD,
            handshake_timeout: DEFAULT_HANDSHAKE_TIMEOUT,
            tracer: Tracer::default(),
        }
    }
}

impl ProducerOptions {
    pub fn from_config(config: &PipelineConfig, producer_id: impl Into<String>) -> Self {
        Self {
            producer_id: producer_id.into(),
            parallelism: config.parallelism,
            window: config.window,
            ..Self::default()
        }
    }
}

/// Destination for encoded envelopes.
pub trait EnvelopeSink {
    fn send(&mut self, payload: &[u8]) -> Result<(), WireError>;
    fn finish(self) -> Result<(), WireError>;
}

impl EnvelopeSink for DataSender {
    fn send(&mut self, payload: &[u8]) -> Result<(), WireError> {
        self.send_encoded(payload)
    }

    fn finish(self) -> Result<(), WireError> {
        DataSender::finish(self)
    }
}

/// In-memory sink, optionally failing after a number of sends.
#[derive(Debug, Default)]
pub struct MemorySink {
    pub payloads: Vec<Vec<u8>>,
    pub fail_after: Option<usize>,
}

impl EnvelopeSink for MemorySink {
    fn send(&mut self, payload: &[u8]) -> Result<(), WireError> {
        if self.fail_after.is_some_and(|n| self.payloads.len() >= n) {
            return Err(WireError::ConnectionClosed);
        }
        self.payloads.push(payload.to_vec());
        Ok(())
    }

    fn finish(self) -> Result<(), WireError> {
        Ok(())
    }
}

enum Msg {
    Verdict(Verdict),
    Dropped(&'static str),
    Unreadable,
    Done { skipped: u64 },
}

/// Connects to the configured endpoint and streams `files` through the
/// configured stages.
pub fn run_producer(
    config: &PipelineConfig,
    files: &[PathBuf],
    opts: ProducerOptions,
) -> Result<ProducerStats, ProducerError> {
    let chain = config.chain()?;
    let sender = DataSender::connect(
        config.endpoint.as_str(),
        SenderOptions {
            producer_id: opts.producer_id.clone(),
            handshake_timeout: opts.handshake_timeout,
            tracer: opts.tracer.clone(),
            ..SenderOptions::default()
        },
    )
    .map_err(ProducerError::Connect)?;
    produce(chain, files, &opts, sender)
}

/// Reads `files` with up to `parallelism` concurrent readers and sends the
/// surviving envelopes in file order, record order within a file.
///
/// Stages before the first serialized one run on the reader threads; the
/// rest run on the calling thread in stream order.
pub fn produce<S: EnvelopeSink>(
    chain: Chain,
    files: &[PathBuf],
    opts: &ProducerOptions,
    sink: S,
) -> Result<ProducerStats, ProducerError> {
    let started = Instant::now();
    let (prefix, suffix) = chain.split_parallel();
    let prefix = &prefix;
    let source = &opts.source;
    let window = opts.window.max(1) as usize;
    let mut tally = Tally::new(opts);

    let outcome = std::thread::scope(|scope| {
        let (file_tx, file_rx) = mpsc::sync_channel::<Receiver<Msg>>(opts.parallelism.max(1) - 1);
        scope.spawn(move || {
            for path in files {
                let (tx, rx) = mpsc::sync_channel(window);
                // Queue the receiver first so at most `parallelism` readers run.
                if file_tx.send(rx).is_err() {
                    return;
                }
                scope.spawn(move || read_file(path, prefix, source, tx));
            }
        });
        tally.drain(file_rx, &suffix, sink)
    });

    let mut stats = tally.stats;
    stats.wall_time = started.elapsed().as_secs_f64();
    stats.post_filter_rate = if stats.wall_time > 0.0 {
        stats.records_kept as f64 / stats.wall_time
    } else {
        0.0
    };
    stats.stream_sha256 = hex::encode(tally.hasher.finalize());
    debug_assert!(stats.is_balanced());
    match outcome {
        Ok(()) => Ok(stats),
        Err(source) => Err(ProducerError::ConnectionLost {
            after: stats.data_frames_sent,
            stats: Box::new(stats),
            source,
        }),
    }
}

struct Tally {
    filter: FilterStats,
    stats: ProducerStats,
    hasher: Sha256,
    max_payload: usize,
}

impl Tally {
    fn new(opts: &ProducerOptions) -> Self {
        Self {
            filter: FilterStats::default(),
            stats: ProducerStats {
                producer_id: opts.producer_id.clone(),
                ..Default::default()
            },
            hasher: Sha256::new(),
            max_payload: opts.max_frame_payload,
        }
    }

    fn drain<S: EnvelopeSink>(
        &mut self,
        files: Receiver<Receiver<Msg>>,
        suffix: &Chain,
        mut sink: S,
    ) -> Result<(), WireError> {
        let result = (|| {
            for rx in files.iter() {
                for msg in rx.iter() {
                    self.handle(msg, suffix, &mut sink)?;
                }
            }
            Ok(())
        })();
        self.sync();
        result?;
        sink.finish()
    }

    fn handle<S: EnvelopeSink>(&mut self, msg: Msg, suffix: &Chain, sink: &mut S) -> Result<(), WireError> {
        let sample = match msg {
            Msg::Dropped(reason) => {
                self.filter.record_drop(reason);
                return Ok(());
            }
            Msg::Unreadable => {
                self.stats.files_unreadable += 1;
                return Ok(());
            }
            Msg::Done { skipped } => {
                self.stats.records_skipped += skipped;
                return Ok(());
            }
            Msg::Verdict(Verdict::Drop(reason)) => {
                self.filter.record_drop(&reason);
                return Ok(());
            }
            Msg::Verdict(Verdict::Keep(sample)) => sample,
        };
        let sample = match apply_stage(suffix, sample) {
            Verdict::Keep(s) => s,
            Verdict::Drop(reason) => {
                self.filter.record_drop(&reason);
                return Ok(());
            }
        };
        let Ok(payload) = encode_envelope_limited(&sample.into_wire_envelope(), self.max_payload) else {
            self.filter.record_drop(DROP_TOO_LARGE);
            return Ok(());
        };
        self.filter.input += 1;
        self.filter.kept += 1;
        sink.send(&payload)?;
        self.hasher.update(&payload);
        self.stats.data_frames_sent += 1;
        self.stats.bytes_sent += (FRAME_HEADER_LEN + payload.len()) as u64;
        Ok(())
    }

    fn sync(&mut self) {
        self.stats.records_read = self.filter.input;
        self.stats.records_kept = self.filter.kept;
        self.stats.drops = self.filter.drops.clone();
    }
}

fn read_file(path: &Path, prefix: &Chain, source: &Source, tx: SyncSender<Msg>) {
    match source {
        Source::Records => {
            let mut reader = match iterate_records(path) {
                Ok(r) => r,
                Err(e) => {
                    warn!("{e}");
                    let _ = tx.send(Msg::Unreadable);
                    return;
                }
            };
            for record in reader.by_ref() {
                let msg = match record_to_sample(&record) {
                    Ok(sample) => Msg::Verdict(apply_stage(prefix, sample)),
                    Err(reason) => Msg::Dropped(reason),
                };
                if tx.send(msg).is_err() {
                    debug!("reader for {} stopped early", path.display());
                    return;
                }
            }
            let _ = tx.send(Msg::Done {
                skipped: reader.skipped(),
            });
        }
        Source::Pairs(index) => {
            let mut joiner = join_pairs(&[path.to_path_buf()], Arc::clone(index));
            for pair in joiner.by_ref() {
                let msg = match pair {
                    Ok(pair) => {
                        let mut sample = Sample::new(pair.into_envelope());
                        sample
                            .derived
                            .insert(DERIVED_WARC_TYPE.into(), WarcType::Response.as_str().into());
                        Msg::Verdict(apply_stage(prefix, sample))
                    }
                    Err(e) => {
                        warn!("{e}");
                        Msg::Unreadable
                    }
                };
                if tx.send(msg).is_err() {
                    return;
                }
            }
            let _ = tx.send(Msg::Done {
                skipped: joiner.skipped_records(),
            });
        }
    }
}
