use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::uri::normalize;
use super::LinkError;
use crate::warc::{extract_http_payload, iterate_records, SourceLocation, WarcError, WarcType};

/// Normalized image URI to the location of its (last) response record.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UriIndex {
    entries: BTreeMap<String, SourceLocation>,
}

impl UriIndex {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts under the normalized form of `uri`; a later insert wins.
    pub fn insert(&mut self, uri: &str, location: SourceLocation) -> Result<(), LinkError> {
        self.entries.insert(normalize(uri)?, location);
        Ok(())
    }

    /// Looks up an absolute URI in any (not necessarily normalized) form.
    pub fn get(&self, uri: &str) -> Option<&SourceLocation> {
        normalize(uri).ok().and_then(|k| self.entries.get(&k))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &SourceLocation)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Writes `uri\tfile\toffset\tindex` lines sorted by URI.
    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (uri, loc) in &self.entries {
            writeln!(out, "{uri}\t{}\t{}\t{}", loc.file_path, loc.member_offset, loc.record_index)?;
        }
        out.flush()
    }

    pub fn read_from<R: BufRead>(input: R) -> Result<Self, LinkError> {
        let mut index = Self::new();
        for (n, line) in input.lines().enumerate() {
            let line = line.map_err(|e| LinkError::Warc(WarcError::Io(e)))?;
            if line.is_empty() {
                continue;
            }
            let bad = || LinkError::BadIndexLine(n + 1);
            let mut cols = line.split('\t');
            let (Some(uri), Some(file), Some(off), Some(idx), None) =
                (cols.next(), cols.next(), cols.next(), cols.next(), cols.next())
            else {
                return Err(bad());
            };
            let loc = SourceLocation::new(
                file,
                off.parse().map_err(|_| bad())?,
                idx.parse().map_err(|_| bad())?,
            );
            index.insert(uri, loc).map_err(|_| bad())?;
        }
        Ok(index)
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<(), LinkError> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| LinkError::Warc(WarcError::Io(e)))?;
        self.write_to(std::io::BufWriter::new(f))
            .map_err(|e| LinkError::Warc(WarcError::Io(e)))
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Self, LinkError> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| LinkError::Warc(WarcError::unreadable(path, e)))?;
        Self::read_from(std::io::BufReader::new(f))
    }
}

/// Image entries of one file, in record order.
fn index_file(path: &Path) -> Result<Vec<(String, SourceLocation)>, WarcError> {
    let mut out = Vec::new();
    for record in iterate_records(path)? {
        if record.warc_type() != WarcType::Response {
            continue;
        }
        let Some(uri) = record.target_uri() else { continue };
        let Ok(http) = extract_http_payload(&record) else { continue };
        if !http.mime_type.starts_with("image/") {
            continue;
        }
        // Tabs and newlines would break the text format; no valid URI has them.
        if uri.contains(['\t', '\n', '\r']) {
            continue;
        }
        if let Ok(key) = normalize(uri) {
            out.push((key, record.source().clone()));
        }
    }
    Ok(out)
}

/// Pass 1: indexes every image response record in the manifest files.
///
/// Files are scanned in parallel; on duplicate URIs the later record wins,
/// later meaning record order within a file and manifest order across files.
pub fn build_uri_index(files: &[PathBuf]) -> Result<UriIndex, WarcError> {
    let per_file: Vec<_> = files.par_iter().map(|p| index_file(p)).collect::<Result<_, _>>()?;
    let mut index = UriIndex::new();
    for entries in per_file {
        index.entries.extend(entries);
    }
    Ok(index)
}
