use std::io::Write;
use std::net::{Shutdown, TcpStream, ToSocketAddrs};
use std::sync::mpsc::{self, Receiver, TryRecvError};
use std::thread::JoinHandle;
use std::time::Duration;

use log::debug;

use super::envelope::{encode_envelope, RecordEnvelope};
use super::flow::{credit_update, FlowEvent, FlowState};
use super::frame::{frame_encode, write_frame, Frame, FrameReader, FrameType};
use super::handshake::producer_handshake_with_proto;
use super::trace::{TraceKind, Tracer};
use super::{WireError, PROTO};

enum Inbound {
    Credit(u32),
    Failed(WireError),
}

/// Producer end of a connection: sends DATA frames under credit.
///
/// A background thread reads CREDIT frames so the sender only blocks when
/// it has run out of credit.
pub struct DataSender {
    stream: TcpStream,
    flow: FlowState,
    inbound: Receiver<Inbound>,
    reader: Option<JoinHandle<()>>,
    tracer: Tracer,
    bytes_sent: u64,
    failed: Option<WireError>,
}

#[derive(Debug, Clone)]
pub struct SenderOptions {
    pub producer_id: String,
    pub handshake_timeout: Duration,
    pub tracer: Tracer,
    pub proto: String,
}

impl Default for SenderOptions {
    fn default() -> Self {
        Self {
            producer_id: "producer-0".to_string(),
            handshake_timeout: super::DEFAULT_HANDSHAKE_TIMEOUT,
            tracer: Tracer::default(),
            proto: PROTO.to_string(),
        }
    }
}

impl DataSender {
    pub fn connect(addr: impl ToSocketAddrs, opts: SenderOptions) -> Result<Self, WireError> {
        let stream = TcpStream::connect(addr).map_err(WireError::from_io)?;
        Self::handshake(stream, opts)
    }

    pub fn handshake(stream: TcpStream, opts: SenderOptions) -> Result<Self, WireError> {
        stream.set_nodelay(true).map_err(WireError::from_io)?;
        stream
            .set_read_timeout(Some(opts.handshake_timeout))
            .map_err(WireError::from_io)?;
        let read_half = stream.try_clone().map_err(WireError::from_io)?;
        let mut reader = FrameReader::new(read_half);
        let mut writer = stream.try_clone().map_err(WireError::from_io)?;
        let credits =
            producer_handshake_with_proto(&mut reader, &mut writer, &opts.producer_id, &opts.proto)?;
        stream.set_read_timeout(None).map_err(WireError::from_io)?;
        opts.tracer.record(TraceKind::InitialCredits(credits));

        let (tx, rx) = mpsc::channel();
        let handle = std::thread::Builder::new()
            .name(format!("credits-{}", opts.producer_id))
            .spawn(move || read_credits(reader, tx))
            .map_err(WireError::from_io)?;

        Ok(Self {
            stream,
            // The window is only used for receiver-side checks.
            flow: FlowState::sender(credits, credits.max(1)),
            inbound: rx,
            reader: Some(handle),
            tracer: opts.tracer,
            bytes_sent: 0,
            failed: None,
        })
    }

    pub fn flow(&self) -> &FlowState {
        &self.flow
    }

    pub fn bytes_sent(&self) -> u64 {
        self.bytes_sent
    }

    pub fn data_frames_sent(&self) -> u64 {
        self.flow.data_sent
    }

    /// Sends one envelope as a DATA frame, blocking until credit is available.
    pub fn send(&mut self, env: &RecordEnvelope) -> Result<(), WireError> {
        let payload = encode_envelope(env)?;
        self.send_encoded(&payload)
    }

    pub fn send_encoded(&mut self, payload: &[u8]) -> Result<(), WireError> {
        if let Some(e) = &self.failed {
            return Err(e.clone());
        }
        self.poll_inbound(false)?;
        while !self.flow.can_send() {
            self.poll_inbound(true)?;
        }
        let bytes = frame_encode(FrameType::Data, payload)?;
        self.flow = credit_update(self.flow.clone(), FlowEvent::DataSent)?;
        self.tracer.record(TraceKind::DataSent);
        if let Err(e) = self.stream.write_all(&bytes) {
            let e = WireError::from_io(e);
            self.failed = Some(e.clone());
            return Err(e);
        }
        self.bytes_sent += bytes.len() as u64;
        Ok(())
    }

    fn poll_inbound(&mut self, block: bool) -> Result<(), WireError> {
        loop {
            let msg = if block {
                match self.inbound.recv() {
                    Ok(m) => m,
                    Err(_) => Inbound::Failed(WireError::ConnectionClosed),
                }
            } else {
                match self.inbound.try_recv() {
                    Ok(m) => m,
                    Err(TryRecvError::Empty) => return Ok(()),
                    Err(TryRecvError::Disconnected) => Inbound::Failed(WireError::ConnectionClosed),
                }
            };
            match msg {
                Inbound::Credit(n) => {
                    self.flow = credit_update(self.flow.clone(), FlowEvent::CreditReceived(n))?;
                    self.tracer.record(TraceKind::CreditReceived(n));
                    if block {
                        return Ok(());
                    }
                }
                Inbound::Failed(e) => {
                    self.failed = Some(e.clone());
                    return Err(e);
                }
            }
        }
    }

    /// Sends END and waits for the consumer to close its side.
    pub fn finish(mut self) -> Result<(), WireError> {
        if let Some(e) = &self.failed {
            return Err(e.clone());
        }
        // Surface an ERROR or close that arrived while we were sending.
        self.poll_inbound(false)?;
        write_frame(&mut self.stream, &Frame::end())?;
        self.tracer.record(TraceKind::EndSent);
        let _ = self.stream.shutdown(Shutdown::Write);
        if let Some(h) = self.reader.take() {
            let _ = h.join();
        }
        Ok(())
    }

    /// Drops the connection without END.
    pub fn abort(mut self) {
        let _ = self.stream.shutdown(Shutdown::Both);
        if let Some(h) = self.reader.take() {
            let _ = h.join();
        }
    }
}

fn read_credits(mut reader: FrameReader<TcpStream>, tx: mpsc::Sender<Inbound>) {
    loop {
        let msg = match reader.read_frame() {
            Ok(Some(f)) => match f.frame_type {
                FrameType::Credit => match f.credit_count() {
                    Ok(n) => Inbound::Credit(n),
                    Err(e) => Inbound::Failed(e),
                },
                FrameType::Error => {
                    Inbound::Failed(WireError::Remote(String::from_utf8_lossy(&f.payload).into()))
                }
                other => Inbound::Failed(WireError::Protocol(format!(
                    "unexpected {other:?} from consumer"
                ))),
            },
            Ok(None) => Inbound::Failed(WireError::ConnectionClosed),
            Err(e) => Inbound::Failed(e),
        };
        let stop = matches!(msg, Inbound::Failed(_));
        if let Inbound::Failed(e) = &msg {
            debug!("credit reader stopping: {e}");
        }
        if tx.send(msg).is_err() || stop {
            return;
        }
    }
}
