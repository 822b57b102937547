use std::path::PathBuf;
use std::sync::Arc;

use log::debug;

use super::html::extract_image_links;
use super::index::UriIndex;
use super::uri::normalize;
use crate::ingest::{record_to_sample, with_source};
use crate::warc::{
    extract_http_payload, iterate_records, read_record_at, WarcError, WarcReader,
};
use crate::wire::{RecordEnvelope, KEY_PAIRED_PAYLOAD, KEY_PAIRED_URI};

/// A page together with one image it links to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairedSample {
    pub page: RecordEnvelope,
    pub image: RecordEnvelope,
    /// The resolved link, as written in the page after resolution.
    pub link_uri: String,
}

impl PairedSample {
    /// The page envelope carrying the image as `paired_payload`/`paired_uri`.
    pub fn into_envelope(self) -> RecordEnvelope {
        let mut image = self.image;
        let payload = image.insert(crate::wire::KEY_PAYLOAD, Vec::new()).unwrap_or_default();
        self.page
            .with(KEY_PAIRED_PAYLOAD, payload)
            .with(KEY_PAIRED_URI, self.link_uri.into_bytes())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct JoinStats {
    pub pages: u64,
    pub links: u64,
    pub pairs: u64,
    /// Links whose target is not in the index.
    pub miss_count: u64,
    /// Index entries whose record could not be read back.
    pub missing_at_location: u64,
}

/// Pass 2: streams pairs in page order, link order within a page.
pub struct PairJoiner {
    files: std::vec::IntoIter<PathBuf>,
    index: Arc<UriIndex>,
    current: Option<WarcReader<std::fs::File>>,
    pending: std::collections::VecDeque<PairedSample>,
    stats: JoinStats,
    skipped: u64,
}

pub fn join_pairs(files: &[PathBuf], index: Arc<UriIndex>) -> PairJoiner {
    PairJoiner {
        files: Vec::from(files).into_iter(),
        index,
        current: None,
        pending: Default::default(),
        stats: JoinStats::default(),
        skipped: 0,
    }
}

impl PairJoiner {
    pub fn stats(&self) -> JoinStats {
        self.stats
    }

    /// Malformed records skipped while reading pages.
    pub fn skipped_records(&self) -> u64 {
        self.skipped + self.current.as_ref().map_or(0, |r| r.skipped())
    }

    fn pair_page(&mut self, page: RecordEnvelope) {
        self.stats.pages += 1;
        let links = extract_image_links(page.payload(), &page.target_uri());
        for link in links {
            self.stats.links += 1;
            let Ok(key) = normalize(&link) else {
                self.stats.miss_count += 1;
                continue;
            };
            let Some(loc) = self.index.get(&key) else {
                self.stats.miss_count += 1;
                continue;
            };
            let image = read_record_at(loc).ok().and_then(|rec| {
                let uri = rec.target_uri().map(normalize)?.ok()?;
                let http = extract_http_payload(&rec).ok()?;
                (uri == key).then(|| {
                    with_source(
                        RecordEnvelope::record(rec.record_id(), rec.target_uri().unwrap_or_default(), http.mime_type, http.body),
                        rec.source(),
                    )
                })
            });
            match image {
                Some(image) => {
                    self.stats.pairs += 1;
                    self.pending.push_back(PairedSample {
                        page: page.clone(),
                        image,
                        link_uri: link,
                    });
                }
                None => {
                    debug!("index entry for {key} at {loc:?} is unreadable");
                    self.stats.missing_at_location += 1;
                }
            }
        }
    }
}

impl Iterator for PairJoiner {
    type Item = Result<PairedSample, WarcError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if let Some(p) = self.pending.pop_front() {
                return Some(Ok(p));
            }
            let reader = match &mut self.current {
                Some(r) => r,
                None => {
                    let path = self.files.next()?;
                    match iterate_records(&path) {
                        Ok(r) => self.current.insert(r),
                        Err(e) => return Some(Err(e)),
                    }
                }
            };
            match reader.next() {
                Some(record) => {
                    let Ok(sample) = record_to_sample(&record) else { continue };
                    if sample.envelope.mime() == "text/html" {
                        self.pair_page(sample.envelope);
                    }
                }
                None => {
                    self.skipped += reader.skipped();
                    self.current = None;
                }
            }
        }
    }
}
