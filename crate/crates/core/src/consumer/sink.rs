use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::model::InferenceResult;
use crate::wire::RecordEnvelope;

pub const RESULTS_FILE: &str = "results.jsonl";
pub const BLOBS_DIR: &str = "blobs";
pub const BATCHES_LOG: &str = "batches.log";
pub const STATS_FILE: &str = "stats.json";

#[derive(Debug, Error)]
#[error("i/o error on {path}: {source}")]
pub struct SinkError {
    pub path: PathBuf,
    #[source]
    pub source: std::io::Error,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SinkError + '_ {
    move |source| SinkError {
        path: path.to_path_buf(),
        source,
    }
}

/// Relative path of a payload's blob: `blobs/<hex[0:2]>/<hex>`.
pub fn blob_path(sha_hex: &str) -> String {
    format!("{BLOBS_DIR}/{}/{sha_hex}", &sha_hex[..2])
}

/// Appends result lines and stores payloads content-addressed.
pub struct ResultSink {
    dir: PathBuf,
    results: BufWriter<File>,
    lines: u64,
    blobs_written: u64,
}

impl ResultSink {
    /// Opens `results.jsonl` in `dir` for appending.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, SinkError> {
        let dir = dir.as_ref().to_path_buf();
        std::fs::create_dir_all(dir.join(BLOBS_DIR)).map_err(io_err(&dir))?;
        let path = dir.join(RESULTS_FILE);
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io_err(&path))?;
        Ok(Self {
            dir,
            results: BufWriter::new(file),
            lines: 0,
            blobs_written: 0,
        })
    }

    /// Like [`open`](Self::open), but starts from an empty results file.
    pub fn create(dir: impl AsRef<Path>) -> Result<Self, SinkError> {
        let path = dir.as_ref().join(RESULTS_FILE);
        std::fs::create_dir_all(dir.as_ref()).map_err(io_err(dir.as_ref()))?;
        File::create(&path).map_err(io_err(&path))?;
        Self::open(dir)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn lines_written(&self) -> u64 {
        self.lines
    }

    pub fn blobs_written(&self) -> u64 {
        self.blobs_written
    }

    /// Stores the payload (unless already present) and appends one line.
    /// Sets `result.stored_path` to the blob's path relative to the sink dir.
    pub fn sink_write(&mut self, result: &mut InferenceResult, env: &RecordEnvelope) -> Result<String, SinkError> {
        let sha = hex::encode(result.payload_sha256);
        let rel = blob_path(&sha);
        let path = self.dir.join(&rel);
        if !path.exists() {
            let parent = path.parent().expect("blob path has a parent");
            std::fs::create_dir_all(parent).map_err(io_err(parent))?;
            // Write aside and rename so a crash never leaves a partial blob.
            let tmp = parent.join(format!(".{sha}.tmp"));
            std::fs::write(&tmp, env.payload()).map_err(io_err(&tmp))?;
            std::fs::rename(&tmp, &path).map_err(io_err(&path))?;
            self.blobs_written += 1;
        }
        let line = result_line(result, env, &rel);
        let results = self.dir.join(RESULTS_FILE);
        self.results.write_all(line.as_bytes()).map_err(io_err(&results))?;
        self.lines += 1;
        result.stored_path = Some(rel.clone());
        Ok(rel)
    }

    pub fn flush(&mut self) -> Result<(), SinkError> {
        let path = self.dir.join(RESULTS_FILE);
        self.results.flush().map_err(io_err(&path))
    }
}

impl Drop for ResultSink {
    fn drop(&mut self) {
        let _ = self.results.flush();
    }
}

/// One `results.jsonl` line, newline included. Keys appear in a fixed order
/// and the score has exactly six fractional digits.
pub fn result_line(result: &InferenceResult, env: &RecordEnvelope, payload_path: &str) -> String {
    let s = |v: &str| serde_json::to_string(v).expect("string serializes");
    format!(
        "{{\"record_id\":{},\"target_uri\":{},\"mime\":{},\"score\":{:.6},\"label\":{},\"payload_sha256\":{},\"payload_path\":{}}}\n",
        s(&result.record_id),
        s(&env.target_uri()),
        s(&env.mime()),
        result.score,
        s(&result.label),
        s(&hex::encode(result.payload_sha256)),
        s(payload_path),
    )
}
