use std::io::{Read, Write};
use std::time::Duration;

use super::envelope::{decode_envelope, encode_envelope, RecordEnvelope};
use super::frame::{write_frame, Frame, FrameReader, FrameType};
use super::WireError;

pub const PROTO: &str = "WDL1";
pub const DEFAULT_HANDSHAKE_TIMEOUT: Duration = Duration::from_secs(10);
pub const DEFAULT_PORT: u16 = 4850;

/// What the consumer learned from a producer's HELLO.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeerHello {
    pub producer_id: String,
}

pub fn hello_frame(proto: &str, producer_id: &str) -> Result<Frame, WireError> {
    let env = RecordEnvelope::new()
        .with("proto", proto.as_bytes().to_vec())
        .with("producer_id", producer_id.as_bytes().to_vec());
    Ok(Frame::new(FrameType::Hello, encode_envelope(&env)?))
}

pub fn hello_ack_frame(initial_credits: u32) -> Result<Frame, WireError> {
    let env = RecordEnvelope::new()
        .with("proto", PROTO.as_bytes().to_vec())
        .with("initial_credits", initial_credits.to_be_bytes().to_vec());
    Ok(Frame::new(FrameType::HelloAck, encode_envelope(&env)?))
}

/// Producer side: send HELLO, wait for HELLO_ACK, return the initial credits.
pub fn producer_handshake<R: Read, W: Write>(
    reader: &mut FrameReader<R>,
    writer: &mut W,
    producer_id: &str,
) -> Result<u32, WireError> {
    producer_handshake_with_proto(reader, writer, producer_id, PROTO)
}

#[doc(hidden)]
pub fn producer_handshake_with_proto<R: Read, W: Write>(
    reader: &mut FrameReader<R>,
    writer: &mut W,
    producer_id: &str,
    proto: &str,
) -> Result<u32, WireError> {
    write_frame(writer, &hello_frame(proto, producer_id)?)?;
    let frame = match reader.read_frame() {
        Ok(Some(f)) => f,
        Ok(None) => return Err(WireError::ConnectionClosed),
        Err(WireError::Timeout) => return Err(WireError::HandshakeTimeout),
        Err(e) => return Err(e),
    };
    match frame.frame_type {
        FrameType::HelloAck => {
            let env = decode_envelope(&frame.payload)?;
            let peer_proto = env.get_str("proto").unwrap_or_default();
            if peer_proto != PROTO {
                return Err(WireError::ProtocolMismatch(peer_proto.into_owned()));
            }
            let credits: [u8; 4] = env
                .get("initial_credits")
                .and_then(|b| b.try_into().ok())
                .ok_or_else(|| WireError::Protocol("bad initial_credits".into()))?;
            Ok(u32::from_be_bytes(credits))
        }
        FrameType::Error => {
            let msg = String::from_utf8_lossy(&frame.payload).into_owned();
            if msg == "proto" {
                Err(WireError::ProtocolMismatch(proto.to_string()))
            } else {
                Err(WireError::Remote(msg))
            }
        }
        other => Err(WireError::Protocol(format!("expected HELLO_ACK, got {other:?}"))),
    }
}

/// Consumer side: read HELLO, answer HELLO_ACK or ERROR.
///
/// The caller is responsible for the read timeout on the underlying socket;
/// a timed-out read surfaces as [`WireError::HandshakeTimeout`].
pub fn consumer_handshake<R: Read, W: Write>(
    reader: &mut FrameReader<R>,
    writer: &mut W,
    initial_credits: u32,
) -> Result<PeerHello, WireError> {
    let frame = match reader.read_frame() {
        Ok(Some(f)) => f,
        Ok(None) => return Err(WireError::ConnectionClosed),
        Err(WireError::Timeout) => return Err(WireError::HandshakeTimeout),
        Err(e) => return Err(e),
    };
    if frame.frame_type != FrameType::Hello {
        let _ = write_frame(writer, &Frame::error("expected HELLO"));
        return Err(WireError::Protocol(format!(
            "expected HELLO, got {:?}",
            frame.frame_type
        )));
    }
    let env = match decode_envelope(&frame.payload) {
        Ok(env) => env,
        Err(e) => {
            let _ = write_frame(writer, &Frame::error("hello"));
            return Err(e);
        }
    };
    let proto = env.get_str("proto").unwrap_or_default();
    if proto != PROTO {
        let _ = write_frame(writer, &Frame::error("proto"));
        return Err(WireError::ProtocolMismatch(proto.into_owned()));
    }
    let producer_id = env.get_str("producer_id").unwrap_or_default().into_owned();
    write_frame(writer, &hello_ack_frame(initial_credits)?)?;
    Ok(PeerHello { producer_id })
}
