use std::fs::File;
use std::io::{self, BufRead, BufReader, Read, Seek};
use std::path::Path;

use log::warn;

use super::gzip::{find_pattern, is_gzip, CountingReader, MemberDecoder, GZIP_MAGIC};
use super::parse::{read_record, skip_blank_lines};
use super::record::{SourceLocation, WarcRecord};
use super::WarcError;

const PLAIN_RESYNC: &[u8] = b"\nWARC/1.";

/// Streams the records of one `.warc` or `.warc.gz` file.
///
/// Records that fail to decompress or parse are skipped and counted; the
/// reader then resynchronises on the next gzip member (or version line for
/// uncompressed files).
pub struct WarcReader<R> {
    inner: CountingReader<BufReader<R>>,
    decoder: MemberDecoder,
    path: String,
    compressed: bool,
    next_index: u64,
    skipped: u64,
    pending: std::vec::IntoIter<WarcRecord>,
    done: bool,
}

/// Opens `path` for record iteration.
pub fn iterate_records(path: impl AsRef<Path>) -> Result<WarcReader<File>, WarcError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| WarcError::unreadable(path, e))?;
    WarcReader::new(file, path.display().to_string())
        .map_err(|e| WarcError::unreadable(path, e))
}

impl<R: Read + Seek> WarcReader<R> {
    pub fn new(inner: R, path: impl Into<String>) -> io::Result<Self> {
        let mut inner = CountingReader::new(BufReader::with_capacity(64 * 1024, inner), 0);
        let compressed = is_gzip(inner.fill_buf()?);
        Ok(Self {
            inner,
            decoder: MemberDecoder::new(),
            path: path.into(),
            compressed,
            next_index: 0,
            skipped: 0,
            pending: Vec::new().into_iter(),
            done: false,
        })
    }

    /// Members or records skipped because they failed to decode or parse.
    pub fn skipped(&self) -> u64 {
        self.skipped
    }

    pub fn is_compressed(&self) -> bool {
        self.compressed
    }

    fn location(&self, offset: u64) -> SourceLocation {
        SourceLocation::new(self.path.clone(), offset, self.next_index)
    }

    fn advance(&mut self) -> io::Result<Option<Vec<WarcRecord>>> {
        loop {
            if !self.compressed {
                skip_blank_lines(&mut self.inner)?;
            }
            if self.inner.fill_buf()?.is_empty() {
                return Ok(None);
            }
            let start = self.inner.position();
            let attempt = if self.compressed {
                self.read_member(start)
            } else {
                self.read_plain(start).map(|r| r.into_iter().collect())
            };
            match attempt {
                Ok(records) if records.is_empty() => continue,
                Ok(records) => return Ok(Some(records)),
                Err(err) => {
                    self.skipped += 1;
                    warn!("{}: skipping record at offset {start}: {err}", self.path);
                    // Failed resync candidates are not counted again.
                    if !self.resync(start + 1)? {
                        return Ok(None);
                    }
                }
            }
        }
    }

    fn read_member(&mut self, offset: u64) -> Result<Vec<WarcRecord>, WarcError> {
        // The buffer may hold only part of the header here, so the decoder
        // checks the magic bytes rather than `fill_buf`.
        let mut records = Vec::with_capacity(1);
        let mut decoded = self.decoder.member(&mut self.inner).map_err(|_| WarcError::CorruptGzip(offset))?;
        let mut index = self.next_index;
        loop {
            let loc = SourceLocation::new(self.path.clone(), offset, index);
            match read_record(&mut decoded, loc) {
                Ok(Some(r)) => {
                    records.push(r);
                    index += 1;
                }
                Ok(None) => break,
                Err(WarcError::Io(_)) => return Err(WarcError::CorruptGzip(offset)),
                Err(e) => return Err(e),
            }
        }
        // The CRC is only checked once the member has been read to its end.
        if decoded.fill_buf().map(|b| !b.is_empty()).unwrap_or(true) {
            return Err(WarcError::CorruptGzip(offset));
        }
        self.next_index = index;
        Ok(records)
    }

    fn read_plain(&mut self, offset: u64) -> Result<Option<WarcRecord>, WarcError> {
        let loc = self.location(offset);
        let record = read_record(&mut self.inner, loc)?;
        if record.is_some() {
            self.next_index += 1;
        }
        Ok(record)
    }

    // Repositions at the next plausible record start at or after `from`.
    fn resync(&mut self, from: u64) -> io::Result<bool> {
        let found = if self.compressed {
            find_pattern(self.inner.get_mut(), from, &GZIP_MAGIC)?
        } else {
            find_pattern(self.inner.get_mut(), from.saturating_sub(1), PLAIN_RESYNC)?
                .map(|p| p + 1)
        };
        match found {
            Some(pos) => {
                self.inner.seek_to(pos)?;
                Ok(true)
            }
            None => Ok(false),
        }
    }

}

impl<R: Read + Seek> Iterator for WarcReader<R> {
    type Item = WarcRecord;

    fn next(&mut self) -> Option<WarcRecord> {
        loop {
            if let Some(r) = self.pending.next() {
                return Some(r);
            }
            if self.done {
                return None;
            }
            match self.advance() {
                Ok(Some(records)) => self.pending = records.into_iter(),
                Ok(None) => self.done = true,
                Err(e) => {
                    warn!("{}: read error: {e}", self.path);
                    self.skipped += 1;
                    self.done = true;
                }
            }
        }
    }
}

/// Reads the record stored at `location` without scanning the file.
///
/// For compressed files this decompresses the single member at
/// `member_offset`, so it assumes the one-record-per-member layout.
pub fn read_record_at(location: &SourceLocation) -> Result<WarcRecord, WarcError> {
    let path = Path::new(&location.file_path);
    let file = File::open(path).map_err(|e| WarcError::unreadable(path, e))?;
    let mut reader = BufReader::new(file);
    let compressed = is_gzip(reader.fill_buf()?);
    reader.seek(io::SeekFrom::Start(location.member_offset))?;
    if compressed {
        let mut decoder = MemberDecoder::new();
        let mut decoded = decoder
            .member(&mut reader)
            .map_err(|_| WarcError::CorruptGzip(location.member_offset))?;
        let record = match read_record(&mut decoded, location.clone()) {
            Ok(Some(r)) => r,
            Ok(None) => return Err(WarcError::MalformedHeader(1)),
            Err(WarcError::Io(_)) => return Err(WarcError::CorruptGzip(location.member_offset)),
            Err(e) => return Err(e),
        };
        // Drain to the trailer so the CRC is verified.
        io::copy(&mut decoded, &mut io::sink())
            .map_err(|_| WarcError::CorruptGzip(location.member_offset))?;
        Ok(record)
    } else {
        read_record(&mut reader, location.clone())?.ok_or(WarcError::MalformedHeader(1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::warc::{write_record, WarcType};
    use std::io::Cursor;

    fn record(i: usize) -> WarcRecord {
        WarcRecord::builder(WarcType::Resource)
            .record_id(format!("<urn:test:{i}>"))
            .target_uri(format!("http://e.com/{i}"))
            .block(format!("body number {i} ").repeat(i + 1))
            .build()
            .unwrap()
    }

    fn archive(n: usize, compress: bool) -> (Vec<u8>, Vec<u64>) {
        let mut out = Vec::new();
        let mut offsets = Vec::new();
        for i in 0..n {
            offsets.push(out.len() as u64);
            out.extend(write_record(&record(i), compress));
        }
        (out, offsets)
    }

    fn read_all(data: Vec<u8>) -> (Vec<WarcRecord>, u64) {
        let mut r = WarcReader::new(Cursor::new(data), "mem").unwrap();
        let records: Vec<_> = r.by_ref().collect();
        (records, r.skipped())
    }

    /// A record whose compressed member is exactly `size` bytes.
    fn member_of_size(size: usize) -> Vec<u8> {
        let noise = |n: usize| -> Vec<u8> {
            let mut x = 0x9E37_79B9u32;
            (0..n)
                .map(|_| {
                    x ^= x << 13;
                    x ^= x >> 17;
                    x ^= x << 5;
                    x as u8
                })
                .collect()
        };
        let mut len = size.saturating_sub(400);
        loop {
            let rec = WarcRecord::builder(WarcType::Resource)
                .record_id("<urn:test:pad>")
                .block(noise(len))
                .build()
                .unwrap();
            let bytes = write_record(&rec, true);
            if bytes.len() == size {
                return bytes;
            }
            // Stored noise grows byte for byte, so step by the difference.
            len = (len as isize + size as isize - bytes.len() as isize) as usize;
        }
    }

    #[test]
    fn member_header_across_buffer_boundary() {
        let next = write_record(&record(1), true);
        for split in 1..=10 {
            let mut data = member_of_size(64 * 1024 - split);
            data.extend(&next);
            let (records, skipped) = read_all(data);
            assert_eq!((records.len(), skipped), (2, 0), "header split after {split} bytes");
        }
    }

    #[test]
    fn five_records_in_order() {
        for compress in [false, true] {
            let (data, offsets) = archive(5, compress);
            let (records, skipped) = read_all(data);
            assert_eq!(skipped, 0);
            assert_eq!(records.len(), 5);
            for (i, r) in records.iter().enumerate() {
                assert_eq!(r.source().record_index, i as u64);
                assert_eq!(r.source().member_offset, offsets[i]);
                assert_eq!(r.block(), record(i).block());
            }
        }
    }

    #[test]
    fn empty_input_yields_nothing() {
        let (records, skipped) = read_all(Vec::new());
        assert!(records.is_empty());
        assert_eq!(skipped, 0);
    }

    #[test]
    fn corrupt_member_is_skipped_and_counted() {
        let (mut data, offsets) = archive(10, true);
        let mid = (offsets[4] + offsets[5]) / 2;
        data[mid as usize] ^= 0xff;
        let (records, skipped) = read_all(data);
        assert_eq!(records.len(), 9);
        assert_eq!(skipped, 1);
        assert!(records.iter().all(|r| r.record_id() != "<urn:test:4>"));
    }

    #[test]
    fn truncated_final_record_is_skipped() {
        for compress in [false, true] {
            let (mut data, offsets) = archive(3, compress);
            data.truncate(offsets[2] as usize + 30);
            let (records, skipped) = read_all(data);
            assert_eq!(records.len(), 2, "compress={compress}");
            assert_eq!(skipped, 1);
        }
    }

    #[test]
    fn plain_resync_after_garbage() {
        let (data, offsets) = archive(4, false);
        let mut broken = data[..offsets[1] as usize].to_vec();
        broken.extend_from_slice(b"WARC/1.1\r\nthis is not a header\r\n\r\n");
        broken.extend_from_slice(&data[offsets[1] as usize..]);
        let (records, skipped) = read_all(broken);
        assert_eq!(records.len(), 4);
        assert_eq!(skipped, 1);
    }

    #[test]
    fn multi_record_member_is_read_whole() {
        let mut plain = Vec::new();
        for i in 0..3 {
            plain.extend(write_record(&record(i), false));
        }
        let mut e = flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::fast());
        std::io::Write::write_all(&mut e, &plain).unwrap();
        let (records, skipped) = read_all(e.finish().unwrap());
        assert_eq!(records.len(), 3);
        assert_eq!(skipped, 0);
        assert_eq!(records[2].source().record_index, 2);
    }
}
