use std::io::{self, Read, Write};

use super::envelope::DEFAULT_MAX_FRAME_PAYLOAD;
use super::WireError;

pub const FRAME_HEADER_LEN: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum FrameType {
    Hello = 0x01,
    HelloAck = 0x02,
    Data = 0x10,
    Credit = 0x20,
    Error = 0x7E,
    End = 0x7F,
}

impl FrameType {
    pub fn from_byte(b: u8) -> Result<Self, WireError> {
        Ok(match b {
            0x01 => FrameType::Hello,
            0x02 => FrameType::HelloAck,
            0x10 => FrameType::Data,
            0x20 => FrameType::Credit,
            0x7E => FrameType::Error,
            0x7F => FrameType::End,
            other => return Err(WireError::UnknownFrameType(other)),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub frame_type: FrameType,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(frame_type: FrameType, payload: impl Into<Vec<u8>>) -> Self {
        Self {
            frame_type,
            payload: payload.into(),
        }
    }

    pub fn credit(n: u32) -> Self {
        Self::new(FrameType::Credit, n.to_be_bytes().to_vec())
    }

    pub fn end() -> Self {
        Self::new(FrameType::End, Vec::new())
    }

    pub fn error(message: &str) -> Self {
        Self::new(FrameType::Error, message.as_bytes().to_vec())
    }

    /// Credit count carried by a CREDIT frame.
    pub fn credit_count(&self) -> Result<u32, WireError> {
        let bytes: [u8; 4] = self
            .payload
            .as_slice()
            .try_into()
            .map_err(|_| WireError::Protocol("credit payload must be 4 bytes".into()))?;
        Ok(u32::from_be_bytes(bytes))
    }

    pub fn encode(&self) -> Result<Vec<u8>, WireError> {
        frame_encode(self.frame_type, &self.payload)
    }
}

/// `type (1 byte) ‖ u32 BE length ‖ payload`.
pub fn frame_encode(frame_type: FrameType, payload: &[u8]) -> Result<Vec<u8>, WireError> {
    if payload.len() > DEFAULT_MAX_FRAME_PAYLOAD {
        return Err(WireError::FrameTooLarge(payload.len() as u64));
    }
    let mut out = Vec::with_capacity(FRAME_HEADER_LEN + payload.len());
    out.push(frame_type as u8);
    out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    out.extend_from_slice(payload);
    Ok(out)
}

/// Decodes frames from arbitrarily split input.
///
/// Bytes are appended with [`FrameDecoder::push`]; [`FrameDecoder::next_frame`]
/// yields complete frames and keeps partial ones buffered.
#[derive(Debug)]
pub struct FrameDecoder {
    buf: Vec<u8>,
    start: usize,
    max_payload: usize,
}

impl Default for FrameDecoder {
    fn default() -> Self {
        Self::new(DEFAULT_MAX_FRAME_PAYLOAD)
    }
}

impl FrameDecoder {
    pub fn new(max_payload: usize) -> Self {
        Self {
            buf: Vec::new(),
            start: 0,
            max_payload,
        }
    }

    pub fn push(&mut self, bytes: &[u8]) {
        if self.start > 0 && self.start == self.buf.len() {
            self.buf.clear();
            self.start = 0;
        }
        self.buf.extend_from_slice(bytes);
    }

    pub fn buffered(&self) -> usize {
        self.buf.len() - self.start
    }

    pub fn next_frame(&mut self) -> Result<Option<Frame>, WireError> {
        let avail = &self.buf[self.start..];
        if avail.is_empty() {
            return Ok(None);
        }
        // The type byte is validated as soon as it arrives.
        let frame_type = FrameType::from_byte(avail[0])?;
        if avail.len() < FRAME_HEADER_LEN {
            return Ok(None);
        }
        let len = u32::from_be_bytes(avail[1..5].try_into().unwrap()) as usize;
        if len > self.max_payload {
            return Err(WireError::FrameTooLarge(len as u64));
        }
        if avail.len() < FRAME_HEADER_LEN + len {
            return Ok(None);
        }
        let payload = avail[FRAME_HEADER_LEN..FRAME_HEADER_LEN + len].to_vec();
        self.start += FRAME_HEADER_LEN + len;
        if self.start > 64 * 1024 && self.start * 2 > self.buf.len() {
            self.buf.drain(..self.start);
            self.start = 0;
        }
        Ok(Some(Frame {
            frame_type,
            payload,
        }))
    }
}

/// Blocking frame reader over any byte source.
pub struct FrameReader<R> {
    inner: R,
    decoder: FrameDecoder,
    chunk: Box<[u8]>,
}

impl<R: Read> FrameReader<R> {
    pub fn new(inner: R) -> Self {
        Self {
            inner,
            decoder: FrameDecoder::default(),
            chunk: vec![0u8; 64 * 1024].into_boxed_slice(),
        }
    }

    pub fn get_ref(&self) -> &R {
        &self.inner
    }

    /// Next frame, or `None` on a clean EOF between frames.
    pub fn read_frame(&mut self) -> Result<Option<Frame>, WireError> {
        loop {
            if let Some(frame) = self.decoder.next_frame()? {
                return Ok(Some(frame));
            }
            let n = match self.inner.read(&mut self.chunk) {
                Ok(n) => n,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
                Err(e) => return Err(WireError::from_io(e)),
            };
            if n == 0 {
                return if self.decoder.buffered() == 0 {
                    Ok(None)
                } else {
                    Err(WireError::ConnectionClosed)
                };
            }
            self.decoder.push(&self.chunk[..n]);
        }
    }
}

pub fn write_frame<W: Write>(out: &mut W, frame: &Frame) -> Result<(), WireError> {
    let bytes = frame.encode()?;
    out.write_all(&bytes).map_err(WireError::from_io)?;
    out.flush().map_err(WireError::from_io)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn end_frame_bytes() {
        assert_eq!(frame_encode(FrameType::End, &[]).unwrap(), [0x7F, 0, 0, 0, 0]);
    }

    #[test]
    fn credit_frame_bytes() {
        let bytes = Frame::credit(8).encode().unwrap();
        assert_eq!(bytes, [0x20, 0, 0, 0, 4, 0, 0, 0, 8]);
        let mut d = FrameDecoder::default();
        d.push(&bytes);
        assert_eq!(d.next_frame().unwrap().unwrap().credit_count().unwrap(), 8);
    }

    #[test]
    fn partial_reads_resume() {
        let bytes = [Frame::credit(3).encode().unwrap(), Frame::end().encode().unwrap()].concat();
        let mut d = FrameDecoder::default();
        let mut frames = Vec::new();
        for b in &bytes {
            d.push(std::slice::from_ref(b));
            while let Some(f) = d.next_frame().unwrap() {
                frames.push(f);
            }
        }
        assert_eq!(frames, [Frame::credit(3), Frame::end()]);
    }

    #[test]
    fn unknown_type_and_oversize() {
        let mut d = FrameDecoder::default();
        d.push(&[0x33]);
        assert_eq!(d.next_frame(), Err(WireError::UnknownFrameType(0x33)));

        let mut d = FrameDecoder::new(16);
        d.push(&[0x10, 0, 0, 0, 17]);
        assert_eq!(d.next_frame(), Err(WireError::FrameTooLarge(17)));
    }

    #[test]
    fn reader_reports_mid_frame_eof() {
        let mut r = FrameReader::new(&[0x10u8, 0, 0, 0, 9, 1][..]);
        assert_eq!(r.read_frame(), Err(WireError::ConnectionClosed));
        let mut r = FrameReader::new(&[0x7Fu8, 0, 0, 0, 0][..]);
        assert_eq!(r.read_frame().unwrap(), Some(Frame::end()));
        assert_eq!(r.read_frame().unwrap(), None);
    }
}
