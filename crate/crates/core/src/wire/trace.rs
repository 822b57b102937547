use std::sync::{Arc, Mutex};
use std::time::Instant;

/// What happened on a connection, in the order it happened.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceKind {
    /// Credits granted by HELLO_ACK, as seen by the sender.
    InitialCredits(u32),
    DataSent,
    CreditReceived(u32),
    DataReceived,
    CreditGranted(u32),
    /// Receiver queue depth after an enqueue or dequeue.
    QueueDepth(usize),
    EndSent,
    EndReceived,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceEvent {
    pub at: Instant,
    pub connection: u64,
    pub kind: TraceKind,
}

/// Shared, append-only protocol trace. Cloning shares the same log.
#[derive(Debug, Clone, Default)]
pub struct ProtocolTrace {
    events: Arc<Mutex<Vec<TraceEvent>>>,
}

impl ProtocolTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, connection: u64, kind: TraceKind) {
        let event = TraceEvent {
            at: Instant::now(),
            connection,
            kind,
        };
        self.events.lock().unwrap().push(event);
    }

    pub fn events(&self) -> Vec<TraceEvent> {
        self.events.lock().unwrap().clone()
    }
}

/// Optional trace handle threaded through connection code.
#[derive(Debug, Clone, Default)]
pub struct Tracer {
    trace: Option<ProtocolTrace>,
    connection: u64,
}

impl Tracer {
    pub fn new(trace: Option<ProtocolTrace>, connection: u64) -> Self {
        Self { trace, connection }
    }

    pub fn record(&self, kind: TraceKind) {
        if let Some(t) = &self.trace {
            t.record(self.connection, kind);
        }
    }
}
