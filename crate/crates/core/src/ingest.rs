//! Turning WARC records into envelopes.

use crate::filters::{Sample, DERIVED_WARC_TYPE};
use crate::warc::{extract_http_payload, SourceLocation, WarcRecord, WarcType};
use crate::wire::{RecordEnvelope, KEY_SOURCE_FILE, KEY_SOURCE_OFFSET};

/// Drop reason for records that are not HTTP responses.
pub const DROP_NOT_RESPONSE: &str = "response_only";
/// Drop reason for response records whose HTTP message does not parse.
pub const DROP_HTTP_PARSE: &str = "http_parse";

/// Builds the sample for a response record: HTTP body as payload, HTTP
/// media type as mime. Other records yield the drop reason.
pub fn record_to_sample(record: &WarcRecord) -> Result<Sample, &'static str> {
    if record.warc_type() != WarcType::Response {
        return Err(DROP_NOT_RESPONSE);
    }
    let http = extract_http_payload(record).map_err(|_| DROP_HTTP_PARSE)?;
    let env = RecordEnvelope::record(
        record.record_id(),
        record.target_uri().unwrap_or_default(),
        http.mime_type,
        http.body,
    );
    let mut sample = Sample::new(with_source(env, record.source()));
    sample
        .derived
        .insert(DERIVED_WARC_TYPE.into(), record.warc_type().as_str().into());
    Ok(sample)
}

pub fn with_source(env: RecordEnvelope, source: &SourceLocation) -> RecordEnvelope {
    env.with(KEY_SOURCE_FILE, source.file_path.as_bytes())
        .with(KEY_SOURCE_OFFSET, source.member_offset.to_string().into_bytes())
}
