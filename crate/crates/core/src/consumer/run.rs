use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufWriter, ErrorKind, Write};
use std::net::{Shutdown, TcpListener, TcpStream, ToSocketAddrs};
use std::path::PathBuf;
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use log::{debug, info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::batch::{Batch, Batcher, FlushReason};
use super::interleave::{Interleaver, Poll};
use super::model::{Model, StubModel};
use super::sink::{ResultSink, SinkError, BATCHES_LOG, STATS_FILE};
use super::ConsumerError;
use crate::config::{Mode, PipelineConfig};
use crate::filters::{apply_stage, build_stage, FilterSpec, Sample, Stage, Verdict};
use crate::wire::{
    consumer_handshake, credit_update, decode_envelope, encode_envelope, write_frame, FlowEvent,
    FlowState, Frame, FrameReader, FrameType, GrantPolicy, ProtocolTrace, RecordEnvelope,
    TraceKind, Tracer, WireError, DEFAULT_HANDSHAKE_TIMEOUT,
};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConsumerStats {
    pub mode: Mode,
    /// Producers that completed the handshake.
    pub producers_connected: u64,
    /// Producers that sent END.
    pub producers_ended: u64,
    /// Registered connections that failed before END.
    pub connection_errors: u64,
    /// Connections refused during the handshake.
    pub connections_rejected: u64,
    pub data_frames_received: u64,
    /// DATA frames received per producer id.
    pub per_producer: BTreeMap<String, u64>,
    /// Samples removed by the pre-training dedup stage.
    pub dedup_dropped: u64,
    /// Samples that reached the model or the training hook.
    pub samples_processed: u64,
    pub batches: u64,
    pub flushes: BTreeMap<FlushReason, u64>,
    pub results_written: u64,
    pub results_filtered: u64,
    pub blobs_written: u64,
    /// Seconds spent processing batches.
    pub busy_time: f64,
    /// Seconds spent waiting for samples.
    pub idle_time: f64,
    pub wall_time: f64,
}

#[derive(Debug, Clone)]
pub struct ConsumerOptions {
    pub producers: usize,
    pub mode: Mode,
    pub out_dir: PathBuf,
    pub window: u32,
    pub batch_size: usize,
    pub flush_timeout: Duration,
    pub threshold: f64,
    pub handshake_timeout: Duration,
    /// Applied to samples before batching in train mode.
    pub train_dedup: FilterSpec,
    pub trace: Option<ProtocolTrace>,
}

impl ConsumerOptions {
    pub fn from_config(config: &PipelineConfig) -> Self {
        Self {
            producers: config.producers,
            mode: config.mode,
            out_dir: config.out_dir.clone(),
            window: config.window,
            batch_size: config.batch_size,
            flush_timeout: config.flush_timeout(),
            threshold: config.threshold,
            handshake_timeout: DEFAULT_HANDSHAKE_TIMEOUT,
            train_dedup: config.train_dedup_spec(),
            trace: None,
        }
    }
}

pub fn bind(addr: impl ToSocketAddrs + std::fmt::Display) -> Result<TcpListener, ConsumerError> {
    TcpListener::bind(&addr).map_err(|source| ConsumerError::Bind {
        addr: addr.to_string(),
        source,
    })
}

/// Binds the configured endpoint and serves with the stub model.
pub fn run_consumer(config: &PipelineConfig) -> Result<ConsumerStats, ConsumerError> {
    let listener = bind(config.endpoint.as_str())?;
    let mut model = StubModel::new(config.threshold);
    serve(listener, &ConsumerOptions::from_config(config), &mut model)
}

struct ConnCtl {
    producer_id: String,
    writer: Arc<TcpStream>,
    flow: FlowState,
    grant: GrantPolicy,
    open: bool,
    tracer: Tracer,
}

#[derive(Default)]
struct HubState {
    inter: Interleaver<RecordEnvelope>,
    conns: HashMap<u64, ConnCtl>,
    reserved: usize,
    registered: usize,
    fatal: bool,
    stats: ConsumerStats,
}

struct Hub {
    state: Mutex<HubState>,
    cv: Condvar,
}

impl Hub {
    fn lock(&self) -> MutexGuard<'_, HubState> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }
}

enum Next {
    Sample(RecordEnvelope, Option<(Arc<TcpStream>, u32)>),
    Timeout,
    Done,
}

/// Accepts producers on `listener` until `opts.producers` have connected and
/// ended, feeding their samples through `model` (or the training hook).
pub fn serve(
    listener: TcpListener,
    opts: &ConsumerOptions,
    model: &mut dyn Model,
) -> Result<ConsumerStats, ConsumerError> {
    let started = Instant::now();
    std::fs::create_dir_all(&opts.out_dir).map_err(|source| SinkError {
        path: opts.out_dir.clone(),
        source,
    })?;
    let mut sink = ResultSink::create(&opts.out_dir)?;
    let log_path = opts.out_dir.join(BATCHES_LOG);
    let mut batches_log = BufWriter::new(File::create(&log_path).map_err(|source| SinkError {
        path: log_path.clone(),
        source,
    })?);
    let dedup: Option<Box<dyn Stage>> = match opts.mode {
        Mode::Train => Some(build_stage(&opts.train_dedup).map_err(ConsumerError::Dedup)?),
        Mode::Infer => None,
    };

    let hub = Hub {
        state: Mutex::new(HubState {
            inter: Interleaver::new(opts.producers),
            stats: ConsumerStats {
                mode: opts.mode,
                ..Default::default()
            },
            ..Default::default()
        }),
        cv: Condvar::new(),
    };
    listener.set_nonblocking(true).map_err(|source| ConsumerError::Bind {
        addr: listener.local_addr().map(|a| a.to_string()).unwrap_or_default(),
        source,
    })?;

    let mut busy = Duration::ZERO;
    let mut idle = Duration::ZERO;
    let result = std::thread::scope(|scope| {
        let hub = &hub;
        scope.spawn(move || {
            let mut next_id = 0u64;
            loop {
                {
                    let st = hub.lock();
                    if st.fatal || st.registered >= opts.producers {
                        return;
                    }
                }
                match listener.accept() {
                    Ok((stream, peer)) => {
                        debug!("connection {next_id} from {peer}");
                        let id = next_id;
                        next_id += 1;
                        scope.spawn(move || connection(hub, stream, id, opts));
                    }
                    Err(e) if e.kind() == ErrorKind::WouldBlock => {
                        std::thread::sleep(Duration::from_millis(2));
                    }
                    Err(e) => {
                        warn!("accept failed: {e}");
                        std::thread::sleep(Duration::from_millis(20));
                    }
                }
            }
        });

        let mut batcher: Batcher<RecordEnvelope> = Batcher::new(opts.batch_size, opts.flush_timeout);
        let mut process = |batch: Batch<RecordEnvelope>, busy: &mut Duration| -> Result<(), ConsumerError> {
            let t = Instant::now();
            let r = process_batch(batch, opts, model, &mut sink, &mut batches_log, hub);
            *busy += t.elapsed();
            r
        };
        let outcome: Result<(), ConsumerError> = (|| loop {
            match next_sample(hub, &batcher, &mut idle) {
                Next::Sample(env, grant) => {
                    if let Some((writer, n)) = grant {
                        if let Err(e) = write_frame(&mut &*writer, &Frame::credit(n)) {
                            debug!("credit write failed: {e}");
                        }
                    }
                    if let Some(stage) = &dedup {
                        match apply_stage(stage.as_ref(), Sample::new(env)) {
                            Verdict::Keep(s) => {
                                if let Some(batch) = batcher.push(s.envelope, Instant::now()) {
                                    process(batch, &mut busy)?;
                                }
                            }
                            Verdict::Drop(_) => hub.lock().stats.dedup_dropped += 1,
                        }
                    } else if let Some(batch) = batcher.push(env, Instant::now()) {
                        process(batch, &mut busy)?;
                    }
                }
                Next::Timeout => {
                    if let Some(batch) = batcher.poll(Instant::now()) {
                        process(batch, &mut busy)?;
                    }
                }
                Next::Done => {
                    if let Some(batch) = batcher.finish() {
                        process(batch, &mut busy)?;
                    }
                    return Ok(());
                }
            }
        })();
        if outcome.is_err() {
            let mut st = hub.lock();
            st.fatal = true;
            for conn in st.conns.values() {
                let _ = conn.writer.shutdown(Shutdown::Both);
            }
            hub.cv.notify_all();
        }
        outcome
    });

    sink.flush()?;
    batches_log.flush().map_err(|source| SinkError {
        path: log_path,
        source,
    })?;
    let mut stats = std::mem::take(&mut hub.lock().stats);
    stats.blobs_written = sink.blobs_written();
    stats.busy_time = busy.as_secs_f64();
    stats.idle_time = idle.as_secs_f64();
    stats.wall_time = started.elapsed().as_secs_f64();
    result?;
    let stats_path = opts.out_dir.join(STATS_FILE);
    let json = serde_json::to_string_pretty(&stats).expect("stats serialize");
    std::fs::write(&stats_path, json + "\n").map_err(|source| SinkError {
        path: stats_path,
        source,
    })?;
    info!(
        "consumer done: {} frames from {} producers, {} batches",
        stats.data_frames_received, stats.producers_connected, stats.batches
    );
    Ok(stats)
}

fn next_sample(hub: &Hub, batcher: &Batcher<RecordEnvelope>, idle: &mut Duration) -> Next {
    let mut st = hub.lock();
    loop {
        match st.inter.interleave_next() {
            Poll::Ready { stream, item } => {
                let depth = st.inter.queue_len(stream);
                let grant = st.conns.get_mut(&stream).and_then(|c| {
                    c.tracer.record(TraceKind::QueueDepth(depth));
                    let n = c.grant.on_drain()?;
                    if !c.open {
                        return None;
                    }
                    c.flow = credit_update(c.flow.clone(), FlowEvent::CreditGranted(n))
                        .map_err(|e| warn!("grant to {}: {e}", c.producer_id))
                        .ok()?;
                    c.tracer.record(TraceKind::CreditGranted(n));
                    Some((Arc::clone(&c.writer), n))
                });
                return Next::Sample(item, grant);
            }
            Poll::StreamsExhausted => return Next::Done,
            Poll::Pending if st.fatal => return Next::Done,
            Poll::Pending => {
                let now = Instant::now();
                let wait = match batcher.deadline() {
                    Some(d) if d <= now => return Next::Timeout,
                    Some(d) => d - now,
                    None => Duration::from_millis(200),
                };
                st = hub
                    .cv
                    .wait_timeout(st, wait)
                    .unwrap_or_else(|p| p.into_inner())
                    .0;
                *idle += now.elapsed();
            }
        }
    }
}

fn process_batch(
    batch: Batch<RecordEnvelope>,
    opts: &ConsumerOptions,
    model: &mut dyn Model,
    sink: &mut ResultSink,
    batches_log: &mut BufWriter<File>,
    hub: &Hub,
) -> Result<(), ConsumerError> {
    let n = batch.samples.len() as u64;
    let (mut written, mut filtered) = (0, 0);
    match opts.mode {
        Mode::Infer => {
            let results = model.infer(&batch.samples);
            for (mut result, env) in results.into_iter().zip(&batch.samples) {
                if result.passed() {
                    sink.sink_write(&mut result, env)?;
                    written += 1;
                } else {
                    filtered += 1;
                }
            }
        }
        Mode::Train => {
            let mut h = Sha256::new();
            for env in &batch.samples {
                h.update(encode_envelope(env).expect("received envelopes re-encode"));
            }
            writeln!(batches_log, "{}", hex::encode(h.finalize())).map_err(|source| SinkError {
                path: opts.out_dir.join(BATCHES_LOG),
                source,
            })?;
        }
    }
    let mut st = hub.lock();
    st.stats.samples_processed += n;
    st.stats.batches += 1;
    *st.stats.flushes.entry(batch.flush_reason).or_default() += 1;
    st.stats.results_written += written;
    st.stats.results_filtered += filtered;
    Ok(())
}

/// Handshake, then read frames until END or failure.
fn connection(hub: &Hub, stream: TcpStream, id: u64, opts: &ConsumerOptions) {
    let tracer = Tracer::new(opts.trace.clone(), id);
    let setup = || -> std::io::Result<(FrameReader<TcpStream>, Arc<TcpStream>)> {
        stream.set_nonblocking(false)?;
        stream.set_nodelay(true)?;
        stream.set_read_timeout(Some(opts.handshake_timeout))?;
        Ok((FrameReader::new(stream.try_clone()?), Arc::new(stream.try_clone()?)))
    };
    let (mut reader, writer) = match setup() {
        Ok(x) => x,
        Err(e) => {
            warn!("connection {id}: {e}");
            return;
        }
    };

    {
        let mut st = hub.lock();
        if st.reserved >= opts.producers {
            st.stats.connections_rejected += 1;
            drop(st);
            let _ = write_frame(&mut &*writer, &Frame::error("full"));
            let _ = writer.shutdown(Shutdown::Both);
            return;
        }
        st.reserved += 1;
    }
    let peer = match consumer_handshake(&mut reader, &mut &*writer, opts.window) {
        Ok(p) => p,
        Err(e) => {
            warn!("connection {id}: handshake failed: {e}");
            let mut st = hub.lock();
            st.reserved -= 1;
            st.stats.connections_rejected += 1;
            drop(st);
            let _ = writer.shutdown(Shutdown::Both);
            return;
        }
    };
    let _ = writer.set_read_timeout(None);
    {
        let mut st = hub.lock();
        st.registered += 1;
        st.stats.producers_connected += 1;
        st.stats.per_producer.entry(peer.producer_id.clone()).or_default();
        st.inter.add_stream(id);
        st.conns.insert(
            id,
            ConnCtl {
                producer_id: peer.producer_id.clone(),
                writer: Arc::clone(&writer),
                flow: FlowState::receiver(opts.window),
                grant: GrantPolicy::new(opts.window),
                open: true,
                tracer: tracer.clone(),
            },
        );
        hub.cv.notify_all();
    }
    info!("producer {:?} connected as stream {id}", peer.producer_id);

    let failure = receive(hub, &mut reader, id, &tracer);
    let mut st = hub.lock();
    st.inter.end(id);
    if let Some(c) = st.conns.get_mut(&id) {
        c.open = false;
    }
    match &failure {
        None => st.stats.producers_ended += 1,
        Some(_) => st.stats.connection_errors += 1,
    }
    hub.cv.notify_all();
    drop(st);
    if let Some(e) = failure {
        warn!("stream {id} ({}) closed: {e}", peer.producer_id);
        let msg = match e {
            WireError::CreditViolation => "credit".to_string(),
            WireError::ConnectionClosed => String::new(),
            other => other.to_string(),
        };
        if !msg.is_empty() {
            let _ = write_frame(&mut &*writer, &Frame::error(&msg));
        }
    }
    let _ = writer.shutdown(Shutdown::Both);
}

/// Returns `None` after a clean END.
fn receive(hub: &Hub, reader: &mut FrameReader<TcpStream>, id: u64, tracer: &Tracer) -> Option<WireError> {
    loop {
        let frame = match reader.read_frame() {
            Ok(Some(f)) => f,
            Ok(None) => return Some(WireError::ConnectionClosed),
            Err(e) => return Some(e),
        };
        match frame.frame_type {
            FrameType::Data => {
                let env = match decode_envelope(&frame.payload) {
                    Ok(env) => env,
                    Err(e) => return Some(e),
                };
                if let Err(e) = env.validate_record() {
                    return Some(e);
                }
                let mut st = hub.lock();
                let Some(conn) = st.conns.get_mut(&id) else {
                    return Some(WireError::Protocol("unknown stream".into()));
                };
                match credit_update(conn.flow.clone(), FlowEvent::DataReceived) {
                    Ok(flow) => conn.flow = flow,
                    Err(e) => return Some(e),
                }
                let producer = conn.producer_id.clone();
                tracer.record(TraceKind::DataReceived);
                let depth = st.inter.push(id, env).unwrap_or(0);
                tracer.record(TraceKind::QueueDepth(depth));
                st.stats.data_frames_received += 1;
                *st.stats.per_producer.entry(producer).or_default() += 1;
                hub.cv.notify_all();
            }
            FrameType::End => {
                tracer.record(TraceKind::EndReceived);
                return None;
            }
            FrameType::Error => {
                return Some(WireError::Remote(String::from_utf8_lossy(&frame.payload).into()));
            }
            other => return Some(WireError::Protocol(format!("unexpected {other:?} from producer"))),
        }
    }
}
