use std::io::{self, BufRead, Read, Write};

use flate2::write::GzEncoder;
use flate2::Compression;

use super::record::{Headers, SourceLocation, WarcRecord};
use super::WarcError;

const MAX_HEADER_LINE: usize = 64 * 1024;
const MAX_HEADERS: usize = 1024;
const MAX_PREALLOC: u64 = 64 * 1024 * 1024;

/// Parses one record from the start of `bytes`.
pub fn parse_record(bytes: &[u8], source: SourceLocation) -> Result<WarcRecord, WarcError> {
    let mut cursor = bytes;
    read_record(&mut cursor, source)?.ok_or(WarcError::MalformedHeader(1))
}

/// Reads the next record from a buffered stream.
///
/// Leading blank lines are skipped. Returns `Ok(None)` on a clean end of
/// stream before any record bytes.
pub fn read_record<R: BufRead>(
    reader: &mut R,
    source: SourceLocation,
) -> Result<Option<WarcRecord>, WarcError> {
    skip_blank_lines(reader)?;

    let mut line = Vec::with_capacity(128);
    if read_line(reader, &mut line)? == 0 {
        return Ok(None);
    }
    let version = trim_eol(&line);
    if version != b"WARC/1.0" && version != b"WARC/1.1" {
        return Err(WarcError::MalformedHeader(1));
    }

    let mut headers = Headers::new();
    let mut line_no = 1;
    loop {
        line.clear();
        line_no += 1;
        let n = read_line(reader, &mut line)?;
        // EOF inside the header section, or an overlong line.
        if n == 0 || (n == MAX_HEADER_LINE && !line.ends_with(b"\n")) {
            return Err(WarcError::MalformedHeader(line_no));
        }
        let text = trim_eol(&line);
        if text.is_empty() {
            break;
        }
        if headers.len() >= MAX_HEADERS {
            return Err(WarcError::MalformedHeader(line_no));
        }
        let colon = text
            .iter()
            .position(|&b| b == b':')
            .ok_or(WarcError::MalformedHeader(line_no))?;
        let name = decode_text(&text[..colon]);
        if name.is_empty() || name.contains(|c: char| c.is_ascii_whitespace()) {
            return Err(WarcError::MalformedHeader(line_no));
        }
        let value = decode_text(&text[colon + 1..]);
        headers.push(name, value.trim().to_string());
    }

    let expected = match headers.get(super::record::CONTENT_LENGTH) {
        Some(v) => v
            .trim()
            .parse::<u64>()
            .map_err(|_| WarcError::MalformedHeader(content_length_line(&headers)))?,
        None => {
            return Err(WarcError::MissingMandatoryHeader(
                super::record::CONTENT_LENGTH,
            ))
        }
    };

    let mut block = Vec::with_capacity(expected.min(MAX_PREALLOC) as usize);
    reader.by_ref().take(expected).read_to_end(&mut block)?;
    if (block.len() as u64) < expected {
        return Err(WarcError::TruncatedBlock {
            expected,
            got: block.len() as u64,
        });
    }
    consume_trailer(reader)?;

    WarcRecord::from_parts(headers, block, source).map(Some)
}

/// Serializes a record as WARC/1.1, optionally as its own gzip member.
pub fn write_record(record: &WarcRecord, compress: bool) -> Vec<u8> {
    let mut out = Vec::with_capacity(record.block().len() + 512);
    write_record_to(&mut out, record, compress).expect("writing to a Vec cannot fail");
    out
}

pub fn write_record_to<W: Write>(out: W, record: &WarcRecord, compress: bool) -> io::Result<()> {
    if compress {
        let mut gz = GzEncoder::new(out, Compression::default());
        write_plain(&mut gz, record)?;
        gz.finish()?;
        Ok(())
    } else {
        let mut out = out;
        write_plain(&mut out, record)
    }
}

fn write_plain<W: Write>(out: &mut W, record: &WarcRecord) -> io::Result<()> {
    out.write_all(b"WARC/1.1\r\n")?;
    for (name, value) in record.headers().iter() {
        out.write_all(name.as_bytes())?;
        out.write_all(b": ")?;
        out.write_all(value.as_bytes())?;
        out.write_all(b"\r\n")?;
    }
    out.write_all(b"\r\n")?;
    out.write_all(record.block())?;
    out.write_all(b"\r\n\r\n")
}

fn content_length_line(headers: &Headers) -> usize {
    headers
        .iter()
        .position(|(n, _)| n.eq_ignore_ascii_case(super::record::CONTENT_LENGTH))
        .map(|i| i + 2)
        .unwrap_or(1)
}

fn read_line<R: BufRead>(reader: &mut R, buf: &mut Vec<u8>) -> io::Result<usize> {
    let n = reader
        .by_ref()
        .take(MAX_HEADER_LINE as u64)
        .read_until(b'\n', buf)?;
    Ok(n)
}

fn trim_eol(line: &[u8]) -> &[u8] {
    let line = line.strip_suffix(b"\n").unwrap_or(line);
    line.strip_suffix(b"\r").unwrap_or(line)
}

pub(crate) fn skip_blank_lines<R: BufRead>(reader: &mut R) -> io::Result<u64> {
    let mut skipped = 0u64;
    loop {
        let buf = reader.fill_buf()?;
        if buf.is_empty() {
            return Ok(skipped);
        }
        let n = buf
            .iter()
            .take_while(|&&b| b == b'\r' || b == b'\n')
            .count();
        let whole = n == buf.len();
        reader.consume(n);
        skipped += n as u64;
        if !whole {
            return Ok(skipped);
        }
    }
}

// The block is followed by CRLF CRLF; tolerate bare LFs or a missing trailer.
fn consume_trailer<R: BufRead>(reader: &mut R) -> io::Result<()> {
    let mut taken = 0;
    while taken < 4 {
        let buf = reader.fill_buf()?;
        match buf.first() {
            Some(b'\r') | Some(b'\n') => {
                reader.consume(1);
                taken += 1;
            }
            _ => break,
        }
    }
    Ok(())
}

/// UTF-8 when valid, Latin-1 otherwise.
pub(crate) fn decode_text(bytes: &[u8]) -> String {
    match std::str::from_utf8(bytes) {
        Ok(s) => s.to_string(),
        Err(_) => bytes.iter().map(|&b| b as char).collect(),
    }
}
