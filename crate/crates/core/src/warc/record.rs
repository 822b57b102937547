use std::fmt;
use std::str::FromStr;

use super::WarcError;

/// Record types defined by WARC/1.1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum WarcType {
    Warcinfo,
    Request,
    Response,
    Resource,
    Metadata,
    Revisit,
    Conversion,
    Continuation,
}

impl WarcType {
    pub const ALL: [WarcType; 8] = [
        WarcType::Warcinfo,
        WarcType::Request,
        WarcType::Response,
        WarcType::Resource,
        WarcType::Metadata,
        WarcType::Revisit,
        WarcType::Conversion,
        WarcType::Continuation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            WarcType::Warcinfo => "warcinfo",
            WarcType::Request => "request",
            WarcType::Response => "response",
            WarcType::Resource => "resource",
            WarcType::Metadata => "metadata",
            WarcType::Revisit => "revisit",
            WarcType::Conversion => "conversion",
            WarcType::Continuation => "continuation",
        }
    }
}

impl fmt::Display for WarcType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownWarcType(pub String);

impl FromStr for WarcType {
    type Err = UnknownWarcType;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        WarcType::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| UnknownWarcType(s.to_string()))
    }
}

/// Where a record came from.
///
/// `member_offset` is the byte offset of the gzip member holding the record,
/// or of the record's version line when the file is not compressed.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct SourceLocation {
    pub file_path: String,
    pub member_offset: u64,
    pub record_index: u64,
}

impl SourceLocation {
    pub fn new(file_path: impl Into<String>, member_offset: u64, record_index: u64) -> Self {
        Self {
            file_path: file_path.into(),
            member_offset,
            record_index,
        }
    }
}

/// Ordered header list with case-insensitive lookup.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Headers(Vec<(String, String)>);

impl Headers {
    pub fn new() -> Self {
        Self(Vec::new())
    }

    pub fn push(&mut self, name: impl Into<String>, value: impl Into<String>) {
        self.0.push((name.into(), value.into()));
    }

    /// First value for `name`, compared ASCII case-insensitively.
    pub fn get(&self, name: &str) -> Option<&str> {
        self.0
            .iter()
            .find(|(n, _)| n.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(n, v)| (n.as_str(), v.as_str()))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<Vec<(String, String)>> for Headers {
    fn from(v: Vec<(String, String)>) -> Self {
        Self(v)
    }
}

pub const WARC_RECORD_ID: &str = "WARC-Record-ID";
pub const WARC_TYPE: &str = "WARC-Type";
pub const WARC_DATE: &str = "WARC-Date";
pub const WARC_TARGET_URI: &str = "WARC-Target-URI";
pub const CONTENT_LENGTH: &str = "Content-Length";
pub const CONTENT_TYPE: &str = "Content-Type";

/// One parsed WARC record.
///
/// The typed fields are derived from `headers` at construction time and the
/// block length always equals `content_length`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WarcRecord {
    record_id: String,
    warc_type: WarcType,
    target_uri: Option<String>,
    content_length: u64,
    headers: Headers,
    block: Vec<u8>,
    source: SourceLocation,
}

impl WarcRecord {
    /// Validates mandatory headers and the block length.
    ///
    /// Header-level failures report the 1-based line number the header would
    /// occupy in serialized form (the version line is line 1).
    pub fn from_parts(
        headers: Headers,
        block: Vec<u8>,
        source: SourceLocation,
    ) -> Result<Self, WarcError> {
        let line_of = |name: &str| {
            headers
                .0
                .iter()
                .position(|(n, _)| n.eq_ignore_ascii_case(name))
                .map(|i| i + 2)
                .unwrap_or(1)
        };

        let record_id = headers
            .get(WARC_RECORD_ID)
            .filter(|v| !v.is_empty())
            .ok_or(WarcError::MissingMandatoryHeader(WARC_RECORD_ID))?
            .to_string();
        let warc_type = headers
            .get(WARC_TYPE)
            .ok_or(WarcError::MissingMandatoryHeader(WARC_TYPE))?
            .parse::<WarcType>()
            .map_err(|_| WarcError::MalformedHeader(line_of(WARC_TYPE)))?;
        let content_length = headers
            .get(CONTENT_LENGTH)
            .ok_or(WarcError::MissingMandatoryHeader(CONTENT_LENGTH))?
            .trim()
            .parse::<u64>()
            .map_err(|_| WarcError::MalformedHeader(line_of(CONTENT_LENGTH)))?;
        headers
            .get(WARC_DATE)
            .ok_or(WarcError::MissingMandatoryHeader(WARC_DATE))?;

        if block.len() as u64 != content_length {
            return Err(WarcError::TruncatedBlock {
                expected: content_length,
                got: block.len() as u64,
            });
        }

        let target_uri = headers
            .get(WARC_TARGET_URI)
            .map(|u| u.trim_start_matches('<').trim_end_matches('>').to_string());

        Ok(Self {
            record_id,
            warc_type,
            target_uri,
            content_length,
            headers,
            block,
            source,
        })
    }

    pub fn builder(warc_type: WarcType) -> RecordBuilder {
        RecordBuilder::new(warc_type)
    }

    pub fn record_id(&self) -> &str {
        &self.record_id
    }

    pub fn warc_type(&self) -> WarcType {
        self.warc_type
    }

    pub fn target_uri(&self) -> Option<&str> {
        self.target_uri.as_deref()
    }

    pub fn content_length(&self) -> u64 {
        self.content_length
    }

    pub fn headers(&self) -> &Headers {
        &self.headers
    }

    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers.get(name)
    }

    pub fn block(&self) -> &[u8] {
        &self.block
    }

    pub fn into_block(self) -> Vec<u8> {
        self.block
    }

    pub fn source(&self) -> &SourceLocation {
        &self.source
    }

    pub fn with_source(mut self, source: SourceLocation) -> Self {
        self.source = source;
        self
    }
}

/// Builds records with the conventional header order:
/// type, id, date, target URI, caller-supplied extras, then Content-Length.
#[derive(Debug, Clone)]
pub struct RecordBuilder {
    warc_type: WarcType,
    record_id: Option<String>,
    date: String,
    target_uri: Option<String>,
    extra: Vec<(String, String)>,
    block: Vec<u8>,
    source: SourceLocation,
}

impl RecordBuilder {
    fn new(warc_type: WarcType) -> Self {
        Self {
            warc_type,
            record_id: None,
            date: "1970-01-01T00:00:00Z".to_string(),
            target_uri: None,
            extra: Vec::new(),
            block: Vec::new(),
            source: SourceLocation::default(),
        }
    }

    pub fn record_id(mut self, id: impl Into<String>) -> Self {
        self.record_id = Some(id.into());
        self
    }

    pub fn date(mut self, date: impl Into<String>) -> Self {
        self.date = date.into();
        self
    }

    pub fn target_uri(mut self, uri: impl Into<String>) -> Self {
        self.target_uri = Some(uri.into());
        self
    }

    pub fn header(mut self, name: impl Into<String>, value: impl Into<String>) -> Self {
        self.extra.push((name.into(), value.into()));
        self
    }

    pub fn block(mut self, block: impl Into<Vec<u8>>) -> Self {
        self.block = block.into();
        self
    }

    pub fn source(mut self, source: SourceLocation) -> Self {
        self.source = source;
        self
    }

    pub fn build(self) -> Result<WarcRecord, WarcError> {
        let mut headers = Headers::new();
        headers.push(WARC_TYPE, self.warc_type.as_str());
        if let Some(id) = self.record_id {
            headers.push(WARC_RECORD_ID, id);
        }
        headers.push(WARC_DATE, self.date);
        if let Some(uri) = self.target_uri {
            headers.push(WARC_TARGET_URI, uri);
        }
        for (n, v) in self.extra {
            headers.push(n, v);
        }
        headers.push(CONTENT_LENGTH, self.block.len().to_string());
        WarcRecord::from_parts(headers, self.block, self.source)
    }
}
