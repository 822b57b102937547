//! GPU side: accept producer streams, interleave, batch, score and store.

mod batch;
mod interleave;
mod model;
mod run;
mod sink;

use thiserror::Error;

use crate::filters::FilterError;

pub use batch::{form_batches, Batch, Batcher, FlushReason};
pub use interleave::{Interleaver, Poll};
pub use model::{
    label_for, stub_infer_one, stub_model_infer, stub_score, InferenceResult, Model, StubModel,
    LABEL_NEG, LABEL_POS,
};
pub use run::{bind, run_consumer, serve, ConsumerOptions, ConsumerStats};
pub use sink::{
    blob_path, result_line, ResultSink, SinkError, BATCHES_LOG, BLOBS_DIR, RESULTS_FILE,
    STATS_FILE,
};

#[derive(Debug, Error)]
pub enum ConsumerError {
    #[error("cannot listen on {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Sink(#[from] SinkError),
    #[error("bad dedup spec: {0}")]
    Dedup(#[source] FilterError),
}
