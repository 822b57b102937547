//! Gzip member boundaries.
//!
//! WARC files are conventionally compressed one gzip member per record so a
//! record can be decompressed on its own given its member offset.

use std::io::{self, BufRead, Read, Seek, SeekFrom};

use flate2::{Crc, Decompress, FlushDecompress, Status};

use super::WarcError;

pub const GZIP_MAGIC: [u8; 3] = [0x1f, 0x8b, 0x08];

const FHCRC: u8 = 0x02;
const FEXTRA: u8 = 0x04;
const FNAME: u8 = 0x08;
const FCOMMENT: u8 = 0x10;
const FRESERVED: u8 = 0xe0;

const OUT_BUF: usize = 32 * 1024;

/// Byte range of one gzip member within a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemberRange {
    pub offset: u64,
    pub compressed_len: u64,
}

impl MemberRange {
    pub fn slice<'a>(&self, data: &'a [u8]) -> &'a [u8] {
        &data[self.offset as usize..(self.offset + self.compressed_len) as usize]
    }
}

pub fn is_gzip(prefix: &[u8]) -> bool {
    prefix.len() >= 2 && prefix[..2] == GZIP_MAGIC[..2]
}

/// Splits a byte stream into gzip members.
///
/// Input that does not start with the gzip magic is reported as a single
/// pseudo-member spanning the whole stream. Iteration stops after the first
/// corrupt member; members before it are still yielded.
pub fn split_gzip_members(data: &[u8]) -> SplitMembers<'_> {
    SplitMembers {
        data,
        pos: 0,
        plain: !data.is_empty() && !is_gzip(data),
        done: false,
    }
}

pub struct SplitMembers<'a> {
    data: &'a [u8],
    pos: usize,
    plain: bool,
    done: bool,
}

impl Iterator for SplitMembers<'_> {
    type Item = Result<MemberRange, WarcError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done || self.pos >= self.data.len() {
            return None;
        }
        if self.plain {
            self.done = true;
            return Some(Ok(MemberRange {
                offset: 0,
                compressed_len: self.data.len() as u64,
            }));
        }
        let offset = self.pos;
        let rest = &self.data[offset..];
        match member_len(rest) {
            Ok(len) => {
                self.pos += len;
                Some(Ok(MemberRange {
                    offset: offset as u64,
                    compressed_len: len as u64,
                }))
            }
            Err(_) => {
                self.done = true;
                Some(Err(WarcError::CorruptGzip(offset as u64)))
            }
        }
    }
}

// Decodes one member from the front of `data` and returns how many
// compressed bytes it spans.
fn member_len(data: &[u8]) -> io::Result<usize> {
    let mut cursor = data;
    let mut decoder = MemberDecoder::new();
    io::copy(&mut decoder.member(&mut cursor)?, &mut io::sink())?;
    Ok(data.len() - cursor.len())
}

/// Decompresses exactly one member from the front of `data`.
pub fn decompress_member(data: &[u8]) -> Result<Vec<u8>, WarcError> {
    let mut out = Vec::new();
    let mut cursor = data;
    let mut decoder = MemberDecoder::new();
    decoder
        .member(&mut cursor)
        .and_then(|mut m| m.read_to_end(&mut out))
        .map_err(|_| WarcError::CorruptGzip(0))?;
    Ok(out)
}

fn invalid(msg: &'static str) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg)
}

/// Inflate state and output buffer shared by consecutive members, so a
/// file of small records does not pay for a fresh decoder per record.
pub(crate) struct MemberDecoder {
    inflate: Decompress,
    crc: Crc,
    buf: Box<[u8]>,
}

impl MemberDecoder {
    pub fn new() -> Self {
        Self {
            inflate: Decompress::new(false),
            crc: Crc::new(),
            buf: vec![0; OUT_BUF].into_boxed_slice(),
        }
    }

    /// Parses the member header at the front of `input` and returns a
    /// reader over the member's contents. The trailer is checked when the
    /// contents have been read to the end; `input` is then positioned just
    /// past the member.
    pub fn member<'a, R: BufRead>(&'a mut self, input: &'a mut R) -> io::Result<Member<'a, R>> {
        read_header(input)?;
        self.inflate.reset(false);
        self.crc.reset();
        Ok(Member {
            input,
            dec: self,
            pos: 0,
            filled: 0,
            finished: false,
        })
    }
}

fn read_header<R: BufRead>(input: &mut R) -> io::Result<()> {
    let mut fixed = [0u8; 10];
    input.read_exact(&mut fixed)?;
    if fixed[..3] != GZIP_MAGIC {
        return Err(invalid("no gzip magic"));
    }
    let flags = fixed[3];
    if flags & FRESERVED != 0 {
        return Err(invalid("reserved gzip flags set"));
    }
    if flags & FEXTRA != 0 {
        let mut len = [0u8; 2];
        input.read_exact(&mut len)?;
        let len = u16::from_le_bytes(len) as u64;
        if io::copy(&mut input.take(len), &mut io::sink())? != len {
            return Err(io::ErrorKind::UnexpectedEof.into());
        }
    }
    for flag in [FNAME, FCOMMENT] {
        if flags & flag != 0 {
            let mut field = Vec::new();
            input.read_until(0, &mut field)?;
            if field.last() != Some(&0) {
                return Err(io::ErrorKind::UnexpectedEof.into());
            }
        }
    }
    if flags & FHCRC != 0 {
        input.read_exact(&mut [0u8; 2])?;
    }
    Ok(())
}

/// Contents of one gzip member; see [`MemberDecoder::member`].
pub(crate) struct Member<'a, R> {
    input: &'a mut R,
    dec: &'a mut MemberDecoder,
    pos: usize,
    filled: usize,
    finished: bool,
}

impl<R: BufRead> Member<'_, R> {
    // Inflates into the shared buffer; returns the bytes produced, zero once
    // the member has ended and its trailer checked out.
    fn inflate_some(&mut self) -> io::Result<usize> {
        loop {
            let input = self.input.fill_buf()?;
            let eof = input.is_empty();
            let flush = if eof { FlushDecompress::Finish } else { FlushDecompress::None };
            let (in0, out0) = (self.dec.inflate.total_in(), self.dec.inflate.total_out());
            let status = self
                .dec
                .inflate
                .decompress(input, &mut self.dec.buf, flush)
                .map_err(|_| invalid("corrupt deflate stream"))?;
            let consumed = (self.dec.inflate.total_in() - in0) as usize;
            let produced = (self.dec.inflate.total_out() - out0) as usize;
            self.input.consume(consumed);
            self.dec.crc.update(&self.dec.buf[..produced]);
            if status == Status::StreamEnd {
                self.check_trailer()?;
                self.finished = true;
                return Ok(produced);
            }
            if produced > 0 {
                return Ok(produced);
            }
            if eof {
                return Err(io::ErrorKind::UnexpectedEof.into());
            }
            if consumed == 0 {
                return Err(invalid("inflate made no progress"));
            }
        }
    }

    fn check_trailer(&mut self) -> io::Result<()> {
        let mut trailer = [0u8; 8];
        self.input.read_exact(&mut trailer)?;
        let crc = u32::from_le_bytes(trailer[..4].try_into().unwrap());
        let size = u32::from_le_bytes(trailer[4..].try_into().unwrap());
        if crc != self.dec.crc.sum() || size != self.dec.crc.amount() {
            return Err(invalid("gzip trailer mismatch"));
        }
        Ok(())
    }
}

impl<R: BufRead> Read for Member<'_, R> {
    fn read(&mut self, out: &mut [u8]) -> io::Result<usize> {
        let avail = self.fill_buf()?;
        let n = avail.len().min(out.len());
        out[..n].copy_from_slice(&avail[..n]);
        self.consume(n);
        Ok(n)
    }
}

impl<R: BufRead> BufRead for Member<'_, R> {
    fn fill_buf(&mut self) -> io::Result<&[u8]> {
        while self.pos == self.filled && !self.finished {
            self.pos = 0;
            self.filled = self.inflate_some()?;
        }
        Ok(&self.dec.buf[self.pos..self.filled])
    }

    fn consume(&mut self, amt: usize) {
        self.pos = (self.pos + amt).min(self.filled);
    }
}

/// Scans forward from `from` for the next occurrence of `pattern`.
pub(crate) fn find_pattern<R: Read + Seek>(
    reader: &mut R,
    from: u64,
    pattern: &[u8],
) -> io::Result<Option<u64>> {
    debug_assert!(!pattern.is_empty());
    reader.seek(SeekFrom::Start(from))?;
    let keep = pattern.len() - 1;
    let mut window: Vec<u8> = Vec::with_capacity(64 * 1024 + keep);
    let mut window_start = from;
    let mut chunk = vec![0u8; 64 * 1024];
    loop {
        let n = reader.read(&mut chunk)?;
        if n == 0 {
            return Ok(None);
        }
        window.extend_from_slice(&chunk[..n]);
        if let Some(i) = window.windows(pattern.len()).position(|w| w == pattern) {
            return Ok(Some(window_start + i as u64));
        }
        let drop_n = window.len().saturating_sub(keep);
        window.drain(..drop_n);
        window_start += drop_n as u64;
    }
}

/// Byte-counting wrapper so member offsets can be recovered from a
/// streaming `BufRead`.
pub(crate) struct CountingReader<R> {
    inner: R,
    pos: u64,
}

impl<R> CountingReader<R> {
    pub fn new(inner: R, pos: u64) -> Self {
        Self { inner, pos }
    }

    pub fn position(&self) -> u64 {
        self.pos
    }

    pub fn get_mut(&mut self) -> &mut R {
        &mut self.inner
    }
}

impl<R: Read> Read for CountingReader<R> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.pos += n as u64;
        Ok(n)
    }
}

impl<R: BufRead> BufRead for CountingReader<R> {
    fn fill_buf(&mut self) -> io::Result<&[u8]> {
        self.inner.fill_buf()
    }

    fn consume(&mut self, amt: usize) {
        self.inner.consume(amt);
        self.pos += amt as u64;
    }
}

impl<R: Seek> CountingReader<R> {
    pub fn seek_to(&mut self, pos: u64) -> io::Result<()> {
        self.inner.seek(SeekFrom::Start(pos))?;
        self.pos = pos;
        Ok(())
    }
}
