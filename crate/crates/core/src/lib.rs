pub mod filters;
pub mod ingest;
pub mod linker;
pub mod warc;
pub mod wire;
pub mod config;
pub mod producer;
pub mod fixture;
pub mod consumer;
pub mod profiler;
