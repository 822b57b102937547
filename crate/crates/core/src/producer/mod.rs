//! CPU side: read a shard of WARC files, filter, and stream envelopes.

mod run;
mod shard;

use thiserror::Error;

use crate::config::ConfigError;
use crate::wire::WireError;

pub use run::{
    produce, run_producer, EnvelopeSink, MemorySink, ProducerOptions, ProducerStats, Source,
    DROP_TOO_LARGE,
};
pub use shard::{assign_shards, sized_files, ShardAssignment};

#[derive(Debug, Error)]
pub enum ProducerError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot reach consumer: {0}")]
    Connect(#[source] WireError),
    #[error("connection lost after {after} frames: {source}")]
    ConnectionLost {
        after: u64,
        stats: Box<ProducerStats>,
        #[source]
        source: WireError,
    },
}
