use thiserror::Error;

use super::record::{WarcRecord, WarcType};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HttpError {
    #[error("block is not an HTTP response")]
    NotHttp,
    #[error("bad chunk at body offset {0}")]
    BadChunk(usize),
}

/// The HTTP message carried by a `response` record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpPayload {
    pub status_code: u16,
    /// Lowercased media type without parameters.
    pub mime_type: String,
    pub charset: Option<String>,
    pub headers: Vec<(String, String)>,
    /// Body after the header section; de-chunked, but never content-decoded.
    pub body: Vec<u8>,
}

impl HttpPayload {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(n, _)| n.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
}

pub const DEFAULT_MIME: &str = "application/octet-stream";

pub fn extract_http_payload(record: &WarcRecord) -> Result<HttpPayload, HttpError> {
    if record.warc_type() != WarcType::Response {
        return Err(HttpError::NotHttp);
    }
    parse_http_response(record.block())
}

pub fn parse_http_response(block: &[u8]) -> Result<HttpPayload, HttpError> {
    let (head, body) = split_head(block).ok_or(HttpError::NotHttp)?;
    let head = String::from_utf8_lossy(head);
    let mut lines = head.split('\n').map(|l| l.strip_suffix('\r').unwrap_or(l));

    let status_code = parse_status_line(lines.next().ok_or(HttpError::NotHttp)?)?;

    let mut headers = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        if line.starts_with([' ', '\t']) {
            // obsolete line folding
            if let Some((_, v)) = headers.last_mut() {
                let v: &mut String = v;
                v.push(' ');
                v.push_str(line.trim());
            }
            continue;
        }
        let Some((name, value)) = line.split_once(':') else {
            continue;
        };
        headers.push((name.trim().to_string(), value.trim().to_string()));
    }

    let find = |name: &str| {
        headers
            .iter()
            .find(|(n, _): &&(String, String)| n.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    };

    let (mime_type, charset) = match find("Content-Type") {
        Some(ct) => parse_content_type(ct),
        None => (DEFAULT_MIME.to_string(), None),
    };

    let chunked = find("Transfer-Encoding")
        .and_then(|te| te.rsplit(',').next())
        .is_some_and(|last| last.trim().eq_ignore_ascii_case("chunked"));
    let body = if chunked {
        dechunk(body)?
    } else {
        body.to_vec()
    };

    Ok(HttpPayload {
        status_code,
        mime_type,
        charset,
        headers,
        body,
    })
}

fn split_head(block: &[u8]) -> Option<(&[u8], &[u8])> {
    if let Some(i) = find(block, b"\r\n\r\n") {
        return Some((&block[..i], &block[i + 4..]));
    }
    find(block, b"\n\n").map(|i| (&block[..i], &block[i + 2..]))
}

fn find(hay: &[u8], needle: &[u8]) -> Option<usize> {
    hay.windows(needle.len()).position(|w| w == needle)
}

fn parse_status_line(line: &str) -> Result<u16, HttpError> {
    let mut parts = line.splitn(3, ' ');
    let version = parts.next().unwrap_or_default();
    let valid_version = version
        .strip_prefix("HTTP/")
        .is_some_and(|v| !v.is_empty() && v.chars().all(|c| c.is_ascii_digit() || c == '.'));
    if !valid_version {
        return Err(HttpError::NotHttp);
    }
    let code = parts.next().unwrap_or_default();
    if code.len() != 3 || !code.bytes().all(|b| b.is_ascii_digit()) {
        return Err(HttpError::NotHttp);
    }
    let code: u16 = code.parse().map_err(|_| HttpError::NotHttp)?;
    if !(100..=599).contains(&code) {
        return Err(HttpError::NotHttp);
    }
    Ok(code)
}

/// Splits `type/subtype; charset=x` into a lowercased media type and charset.
pub fn parse_content_type(value: &str) -> (String, Option<String>) {
    let mut parts = value.split(';');
    let mime = parts.next().unwrap_or_default().trim().to_ascii_lowercase();
    let mime = if mime.is_empty() {
        DEFAULT_MIME.to_string()
    } else {
        mime
    };
    let charset = parts.find_map(|p| {
        let (k, v) = p.split_once('=')?;
        k.trim()
            .eq_ignore_ascii_case("charset")
            .then(|| v.trim().trim_matches('"').to_string())
            .filter(|v| !v.is_empty())
    });
    (mime, charset)
}

/// Decodes an HTTP/1.1 chunked body; trailers after the last chunk are dropped.
pub fn dechunk(body: &[u8]) -> Result<Vec<u8>, HttpError> {
    let mut out = Vec::with_capacity(body.len());
    let mut pos = 0;
    loop {
        let line_start = pos;
        let nl = body[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or(HttpError::BadChunk(line_start))?;
        let line = &body[pos..pos + nl];
        let line = line.strip_suffix(b"\r").unwrap_or(line);
        pos += nl + 1;

        let size_text = line.split(|&b| b == b';').next().unwrap_or_default();
        let size_text = std::str::from_utf8(size_text)
            .map_err(|_| HttpError::BadChunk(line_start))?
            .trim();
        let size = usize::from_str_radix(size_text, 16).map_err(|_| HttpError::BadChunk(line_start))?;
        if size == 0 {
            return Ok(out);
        }
        let end = pos.checked_add(size).ok_or(HttpError::BadChunk(line_start))?;
        if end > body.len() {
            return Err(HttpError::BadChunk(line_start));
        }
        out.extend_from_slice(&body[pos..end]);
        pos = end;
        if body[pos..].starts_with(b"\r\n") {
            pos += 2;
        } else if body[pos..].starts_with(b"\n") {
            pos += 1;
        } else {
            return Err(HttpError::BadChunk(pos));
        }
    }
}
