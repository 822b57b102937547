//! Reference resolution and normalization for absolute URIs.

use super::LinkError;

/// The five generic URI components. Absent parts are `None`; an empty
/// query or fragment is `Some("")`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct UriParts<'a> {
    pub scheme: Option<&'a str>,
    pub authority: Option<&'a str>,
    pub path: &'a str,
    pub query: Option<&'a str>,
    pub fragment: Option<&'a str>,
}

impl<'a> UriParts<'a> {
    pub fn parse(s: &'a str) -> Self {
        let (rest, fragment) = match s.find('#') {
            Some(i) => (&s[..i], Some(&s[i + 1..])),
            None => (s, None),
        };
        let (rest, query) = match rest.find('?') {
            Some(i) => (&rest[..i], Some(&rest[i + 1..])),
            None => (rest, None),
        };
        let (scheme, rest) = match rest.find([':', '/']) {
            Some(i) if i > 0 && rest.as_bytes()[i] == b':' && is_scheme(&rest[..i]) => {
                (Some(&rest[..i]), &rest[i + 1..])
            }
            _ => (None, rest),
        };
        let (authority, path) = match rest.strip_prefix("//") {
            Some(r) => {
                let end = r.find('/').unwrap_or(r.len());
                (Some(&r[..end]), &r[end..])
            }
            None => (None, rest),
        };
        Self {
            scheme,
            authority,
            path,
            query,
            fragment,
        }
    }
}

fn is_scheme(s: &str) -> bool {
    let mut bytes = s.bytes();
    bytes.next().is_some_and(|b| b.is_ascii_alphabetic())
        && bytes.all(|b| b.is_ascii_alphanumeric() || matches!(b, b'+' | b'-' | b'.'))
}

fn recompose(
    scheme: Option<&str>,
    authority: Option<&str>,
    path: &str,
    query: Option<&str>,
    fragment: Option<&str>,
) -> String {
    let mut out = String::with_capacity(path.len() + 32);
    if let Some(s) = scheme {
        out.push_str(s);
        out.push(':');
    }
    if let Some(a) = authority {
        out.push_str("//");
        out.push_str(a);
    }
    out.push_str(path);
    if let Some(q) = query {
        out.push('?');
        out.push_str(q);
    }
    if let Some(f) = fragment {
        out.push('#');
        out.push_str(f);
    }
    out
}

/// Resolves `reference` against the absolute URI `base` (strict parser:
/// a reference with a scheme is always absolute).
pub fn resolve_uri(base: &str, reference: &str) -> Result<String, LinkError> {
    let b = UriParts::parse(base);
    let Some(base_scheme) = b.scheme else {
        return Err(LinkError::UnresolvableReference(format!("base {base:?} has no scheme")));
    };
    let r = UriParts::parse(reference);

    let (scheme, authority, path, query);
    if let Some(rs) = r.scheme {
        scheme = rs;
        authority = r.authority;
        path = remove_dot_segments(r.path);
        query = r.query;
    } else {
        scheme = base_scheme;
        if r.authority.is_some() {
            authority = r.authority;
            path = remove_dot_segments(r.path);
            query = r.query;
        } else {
            authority = b.authority;
            if r.path.is_empty() {
                path = b.path.to_string();
                query = r.query.or(b.query);
            } else {
                path = if r.path.starts_with('/') {
                    remove_dot_segments(r.path)
                } else {
                    remove_dot_segments(&merge(&b, r.path))
                };
                query = r.query;
            }
        }
    }
    Ok(recompose(Some(scheme), authority, &path, query, r.fragment))
}

fn merge(base: &UriParts<'_>, rel: &str) -> String {
    if base.authority.is_some() && base.path.is_empty() {
        return format!("/{rel}");
    }
    match base.path.rfind('/') {
        Some(i) => format!("{}{rel}", &base.path[..=i]),
        None => rel.to_string(),
    }
}

pub fn remove_dot_segments(path: &str) -> String {
    let mut input = path;
    let mut out = String::with_capacity(path.len());
    while !input.is_empty() {
        if let Some(r) = input.strip_prefix("../") {
            input = r;
        } else if let Some(r) = input.strip_prefix("./") {
            input = r;
        } else if input.starts_with("/./") {
            input = &input[2..];
        } else if input == "/." {
            input = "/";
        } else if input.starts_with("/../") || input == "/.." {
            input = if input.len() == 3 { "/" } else { &input[3..] };
            let cut = out.rfind('/').unwrap_or(0);
            out.truncate(cut);
        } else if input == "." || input == ".." {
            input = "";
        } else {
            let start = usize::from(input.starts_with('/'));
            let end = input[start..].find('/').map_or(input.len(), |i| i + start);
            out.push_str(&input[..end]);
            input = &input[end..];
        }
    }
    out
}

fn default_port(scheme: &str) -> Option<&'static str> {
    match scheme {
        "http" | "ws" => Some("80"),
        "https" | "wss" => Some("443"),
        "ftp" => Some("21"),
        _ => None,
    }
}

/// Index key form of an absolute URI: lowercase scheme and host, no
/// fragment, no default (or empty) port. Idempotent.
pub fn normalize(uri: &str) -> Result<String, LinkError> {
    let p = UriParts::parse(uri.trim());
    let scheme = p
        .scheme
        .ok_or_else(|| LinkError::UnresolvableReference(format!("{uri:?} is not absolute")))?
        .to_ascii_lowercase();
    let authority = p.authority.map(|a| {
        let (userinfo, hostport) = match a.rfind('@') {
            Some(i) => (Some(&a[..i]), &a[i + 1..]),
            None => (None, a),
        };
        // The port is after the last colon not inside an IPv6 literal.
        let colon = hostport.rfind(':').filter(|&i| !hostport[i..].contains(']'));
        let (host, port) = match colon {
            Some(i) => (&hostport[..i], Some(&hostport[i + 1..])),
            None => (hostport, None),
        };
        let mut out = String::with_capacity(a.len());
        if let Some(u) = userinfo {
            out.push_str(u);
            out.push('@');
        }
        out.push_str(&host.to_ascii_lowercase());
        if let Some(port) = port {
            if !port.is_empty() && Some(port) != default_port(&scheme) {
                out.push(':');
                out.push_str(port);
            }
        }
        out
    });
    Ok(recompose(Some(&scheme), authority.as_deref(), p.path, p.query, None))
}
