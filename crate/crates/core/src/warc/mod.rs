//! Reading and writing WARC files.
//!
//! Both plain files and member-per-record gzip files are supported. Iteration
//! is streaming: only the record being parsed is held in memory.

mod gzip;
mod http;
mod parse;
mod reader;
mod record;

use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub use gzip::{decompress_member, is_gzip, split_gzip_members, MemberRange, SplitMembers};
pub use http::{
    dechunk, extract_http_payload, parse_content_type, parse_http_response, HttpError,
    HttpPayload, DEFAULT_MIME,
};
pub use parse::{parse_record, read_record, write_record, write_record_to};
pub use reader::{iterate_records, read_record_at, WarcReader};
pub use record::{
    Headers, RecordBuilder, SourceLocation, WarcRecord, WarcType, CONTENT_LENGTH, CONTENT_TYPE,
    WARC_DATE, WARC_RECORD_ID, WARC_TARGET_URI, WARC_TYPE,
};

#[derive(Debug, Error)]
pub enum WarcError {
    #[error("corrupt gzip member at offset {0}")]
    CorruptGzip(u64),
    #[error("malformed header at line {0}")]
    MalformedHeader(usize),
    #[error("missing mandatory header {0}")]
    MissingMandatoryHeader(&'static str),
    #[error("truncated block: expected {expected} bytes, got {got}")]
    TruncatedBlock { expected: u64, got: u64 },
    #[error("cannot read {path}: {source}")]
    FileUnreadable {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl WarcError {
    pub(crate) fn unreadable(path: &Path, source: io::Error) -> Self {
        WarcError::FileUnreadable {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Reads an input manifest: one path per line, `#` starts a comment.
///
/// Relative paths are resolved against the manifest's own directory.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<PathBuf>, WarcError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| WarcError::unreadable(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    Ok(parse_manifest(&text, base))
}

pub fn parse_manifest(text: &str, base: &Path) -> Vec<PathBuf> {
    text.lines()
        .map(|l| l.strip_suffix('\r').unwrap_or(l))
        .map(|l| match l.find('#') {
            Some(i) => &l[..i],
            None => l,
        })
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| {
            let p = Path::new(l);
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base.join(p)
            }
        })
        .collect()
}
