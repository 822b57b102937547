use std::collections::BTreeMap;

use super::WireError;

pub const KEY_RECORD_ID: &str = "record_id";
pub const KEY_TARGET_URI: &str = "target_uri";
pub const KEY_MIME: &str = "mime";
pub const KEY_PAYLOAD: &str = "payload";
pub const KEY_PAIRED_PAYLOAD: &str = "paired_payload";
pub const KEY_PAIRED_URI: &str = "paired_uri";
pub const KEY_SOURCE_FILE: &str = "source_file";
pub const KEY_SOURCE_OFFSET: &str = "source_offset";
pub const STAGE_META_PREFIX: &str = "stage_meta.";

pub const REQUIRED_KEYS: [&str; 4] = [KEY_RECORD_ID, KEY_TARGET_URI, KEY_MIME, KEY_PAYLOAD];

/// Default upper bound on a serialized envelope and on any frame payload.
pub const DEFAULT_MAX_FRAME_PAYLOAD: usize = 64 * 1024 * 1024;

/// A string-keyed map of byte values with one canonical encoding.
///
/// Keys are kept in ascending byte order, which is also the wire order.
#[derive(Debug, Clone, PartialEq, Eq, Default, Hash)]
pub struct RecordEnvelope {
    fields: BTreeMap<String, Vec<u8>>,
}

impl RecordEnvelope {
    pub fn new() -> Self {
        Self::default()
    }

    /// Convenience constructor populating the four required keys.
    pub fn record(
        record_id: impl Into<String>,
        target_uri: impl Into<String>,
        mime: impl Into<String>,
        payload: impl Into<Vec<u8>>,
    ) -> Self {
        let mut env = Self::new();
        env.insert(KEY_RECORD_ID, record_id.into().into_bytes());
        env.insert(KEY_TARGET_URI, target_uri.into().into_bytes());
        env.insert(KEY_MIME, mime.into().into_bytes());
        env.insert(KEY_PAYLOAD, payload.into());
        env
    }

    pub fn insert(&mut self, key: impl Into<String>, value: impl Into<Vec<u8>>) -> Option<Vec<u8>> {
        self.fields.insert(key.into(), value.into())
    }

    pub fn with(mut self, key: impl Into<String>, value: impl Into<Vec<u8>>) -> Self {
        self.insert(key, value);
        self
    }

    pub fn get(&self, key: &str) -> Option<&[u8]> {
        self.fields.get(key).map(Vec::as_slice)
    }

    /// Lossy UTF-8 view of a textual field.
    pub fn get_str(&self, key: &str) -> Option<std::borrow::Cow<'_, str>> {
        self.get(key).map(String::from_utf8_lossy)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.fields.contains_key(key)
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[u8])> {
        self.fields.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn record_id(&self) -> String {
        self.get_str(KEY_RECORD_ID).unwrap_or_default().into_owned()
    }

    pub fn target_uri(&self) -> String {
        self.get_str(KEY_TARGET_URI).unwrap_or_default().into_owned()
    }

    pub fn mime(&self) -> String {
        self.get_str(KEY_MIME).unwrap_or_default().into_owned()
    }

    pub fn payload(&self) -> &[u8] {
        self.get(KEY_PAYLOAD).unwrap_or_default()
    }

    /// Checks that the keys a data sample must carry are present.
    pub fn validate_record(&self) -> Result<(), WireError> {
        match REQUIRED_KEYS.iter().find(|k| !self.contains(k)) {
            Some(k) => Err(WireError::MalformedEnvelope(format!("missing {k}"))),
            None => Ok(()),
        }
    }

    pub fn encoded_len(&self) -> usize {
        2 + self
            .fields
            .iter()
            .map(|(k, v)| 2 + k.len() + 4 + v.len())
            .sum::<usize>()
    }
}

impl FromIterator<(String, Vec<u8>)> for RecordEnvelope {
    fn from_iter<T: IntoIterator<Item = (String, Vec<u8>)>>(iter: T) -> Self {
        Self {
            fields: iter.into_iter().collect(),
        }
    }
}

/// Canonical encoding: u16 field count, then per field in ascending key
/// order a u16 key length, key bytes, u32 value length and value bytes.
/// All integers are big-endian.
pub fn encode_envelope(env: &RecordEnvelope) -> Result<Vec<u8>, WireError> {
    encode_envelope_limited(env, DEFAULT_MAX_FRAME_PAYLOAD)
}

pub fn encode_envelope_limited(env: &RecordEnvelope, max: usize) -> Result<Vec<u8>, WireError> {
    let size = env.encoded_len();
    if size > max || env.fields.len() > u16::MAX as usize {
        return Err(WireError::TooLarge(size));
    }
    let mut out = Vec::with_capacity(size);
    out.extend_from_slice(&(env.fields.len() as u16).to_be_bytes());
    for (k, v) in &env.fields {
        if k.len() > u16::MAX as usize || v.len() > u32::MAX as usize {
            return Err(WireError::TooLarge(size));
        }
        out.extend_from_slice(&(k.len() as u16).to_be_bytes());
        out.extend_from_slice(k.as_bytes());
        out.extend_from_slice(&(v.len() as u32).to_be_bytes());
        out.extend_from_slice(v);
    }
    Ok(out)
}

/// Inverse of [`encode_envelope`]; only canonical encodings are accepted.
pub fn decode_envelope(bytes: &[u8]) -> Result<RecordEnvelope, WireError> {
    let mut cur = Cursor(bytes);
    let count = cur.u16()?;
    let mut fields = BTreeMap::new();
    let mut prev: Option<&[u8]> = None;
    for _ in 0..count {
        let klen = cur.u16()? as usize;
        let key = cur.take(klen)?;
        let vlen = cur.u32()? as usize;
        let value = cur.take(vlen)?;
        if prev.is_some_and(|p| p >= key) {
            return Err(malformed("unsorted"));
        }
        prev = Some(key);
        let key = std::str::from_utf8(key).map_err(|_| malformed("key not utf-8"))?;
        fields.insert(key.to_string(), value.to_vec());
    }
    if !cur.0.is_empty() {
        return Err(malformed("trailing bytes"));
    }
    Ok(RecordEnvelope { fields })
}

fn malformed(detail: &str) -> WireError {
    WireError::MalformedEnvelope(detail.to_string())
}

struct Cursor<'a>(&'a [u8]);

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        if self.0.len() < n {
            return Err(malformed("truncated"));
        }
        let (head, tail) = self.0.split_at(n);
        self.0 = tail;
        Ok(head)
    }

    fn u16(&mut self) -> Result<u16, WireError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }
}
