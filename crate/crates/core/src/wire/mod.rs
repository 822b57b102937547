//! Framed TCP protocol between producers and consumers.
//!
//! Every frame is a one-byte type, a big-endian u32 payload length and the
//! payload. Samples travel as canonical [`RecordEnvelope`] encodings inside
//! DATA frames, and the receiver paces the sender with CREDIT frames.

mod envelope;
mod flow;
mod frame;
mod handshake;
mod sender;
mod trace;

use std::io;

use thiserror::Error;

pub use envelope::{
    decode_envelope, encode_envelope, encode_envelope_limited, RecordEnvelope,
    DEFAULT_MAX_FRAME_PAYLOAD, KEY_MIME, KEY_PAIRED_PAYLOAD, KEY_PAIRED_URI, KEY_PAYLOAD,
    KEY_RECORD_ID, KEY_SOURCE_FILE, KEY_SOURCE_OFFSET, KEY_TARGET_URI, REQUIRED_KEYS,
    STAGE_META_PREFIX,
};
pub use flow::{credit_update, FlowEvent, FlowState, GrantPolicy, DEFAULT_WINDOW};
pub use frame::{
    frame_encode, write_frame, Frame, FrameDecoder, FrameReader, FrameType, FRAME_HEADER_LEN,
};
pub use handshake::{
    consumer_handshake, hello_ack_frame, hello_frame, producer_handshake, PeerHello,
    DEFAULT_HANDSHAKE_TIMEOUT, DEFAULT_PORT, PROTO,
};
pub use sender::{DataSender, SenderOptions};
pub use trace::{ProtocolTrace, TraceEvent, TraceKind, Tracer};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("envelope too large ({0} bytes)")]
    TooLarge(usize),
    #[error("malformed envelope: {0}")]
    MalformedEnvelope(String),
    #[error("unknown frame type 0x{0:02x}")]
    UnknownFrameType(u8),
    #[error("frame payload too large ({0} bytes)")]
    FrameTooLarge(u64),
    #[error("protocol mismatch: peer speaks {0:?}")]
    ProtocolMismatch(String),
    #[error("handshake timed out")]
    HandshakeTimeout,
    #[error("DATA received without credit")]
    CreditViolation,
    #[error("no credit available")]
    NoCredit,
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("peer reported error: {0}")]
    Remote(String),
    #[error("connection closed")]
    ConnectionClosed,
    #[error("timed out")]
    Timeout,
    #[error("i/o error: {0}")]
    Io(String),
}

impl WireError {
    pub fn from_io(e: io::Error) -> Self {
        match e.kind() {
            io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut => WireError::Timeout,
            io::ErrorKind::UnexpectedEof
            | io::ErrorKind::ConnectionReset
            | io::ErrorKind::ConnectionAborted
            | io::ErrorKind::BrokenPipe => WireError::ConnectionClosed,
            _ => WireError::Io(e.to_string()),
        }
    }
}
