//! A forgiving scanner for `<img src>` and `<base href>` in HTML.

use super::uri::resolve_uri;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tag<'a> {
    /// Lowercased tag name.
    pub name: String,
    pub attrs: Vec<(String, &'a str)>,
}

impl Tag<'_> {
    /// First value of an attribute (names are lowercased).
    pub fn attr(&self, name: &str) -> Option<&str> {
        self.attrs.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }
}

/// Iterates start tags in document order. Comments and the contents of
/// `script`/`style` elements are skipped; broken markup is stepped over.
pub struct StartTags<'a> {
    src: &'a str,
    pos: usize,
}

pub fn start_tags(src: &str) -> StartTags<'_> {
    StartTags { src, pos: 0 }
}

impl<'a> Iterator for StartTags<'a> {
    type Item = Tag<'a>;

    fn next(&mut self) -> Option<Tag<'a>> {
        let src = self.src;
        let bytes = src.as_bytes();
        loop {
            let lt = self.pos + src[self.pos..].find('<')?;
            let rest = &src[lt..];
            if rest.starts_with("<!--") {
                self.pos = rest.find("-->").map_or(src.len(), |i| lt + i + 3);
                continue;
            }
            let name_end = rest[1..]
                .find(|c: char| !c.is_ascii_alphanumeric())
                .map_or(rest.len(), |i| i + 1);
            if name_end == 1 || !bytes[lt + 1].is_ascii_alphabetic() {
                // end tag, doctype, stray '<'
                self.pos = lt + 1;
                continue;
            }
            let name = rest[1..name_end].to_ascii_lowercase();
            let (attrs, end) = parse_attrs(src, lt + name_end);
            self.pos = end;
            if name == "script" || name == "style" {
                self.pos = find_ascii_ci(src, end, &format!("</{name}")).unwrap_or(src.len());
            }
            return Some(Tag { name, attrs });
        }
    }
}

fn find_ascii_ci(hay: &str, from: usize, needle: &str) -> Option<usize> {
    let n = needle.as_bytes();
    hay.as_bytes()[from..]
        .windows(n.len())
        .position(|w| w.eq_ignore_ascii_case(n))
        .map(|i| from + i)
}

/// Parses attributes from `pos` up to and including the closing `>`.
/// Returns them with the offset just past the tag.
fn parse_attrs(src: &str, mut pos: usize) -> (Vec<(String, &str)>, usize) {
    let b = src.as_bytes();
    let mut attrs = Vec::new();
    loop {
        while pos < b.len() && (b[pos].is_ascii_whitespace() || b[pos] == b'/') {
            pos += 1;
        }
        if pos >= b.len() {
            return (attrs, pos);
        }
        if b[pos] == b'>' {
            return (attrs, pos + 1);
        }
        let start = pos;
        while pos < b.len() && !b[pos].is_ascii_whitespace() && !matches!(b[pos], b'=' | b'>' | b'/') {
            pos += 1;
        }
        if pos == start {
            // a lone '=' or similar
            pos += 1;
            continue;
        }
        let name = src[start..pos].to_ascii_lowercase();
        let mut p = pos;
        while p < b.len() && b[p].is_ascii_whitespace() {
            p += 1;
        }
        if p < b.len() && b[p] == b'=' {
            p += 1;
            while p < b.len() && b[p].is_ascii_whitespace() {
                p += 1;
            }
            let value;
            if p < b.len() && (b[p] == b'"' || b[p] == b'\'') {
                let q = b[p];
                let vstart = p + 1;
                let vend = b[vstart..].iter().position(|&c| c == q).map_or(b.len(), |i| vstart + i);
                value = &src[vstart..vend];
                p = (vend + 1).min(b.len());
            } else {
                let vstart = p;
                while p < b.len() && !b[p].is_ascii_whitespace() && b[p] != b'>' {
                    p += 1;
                }
                value = &src[vstart..p];
            }
            attrs.push((name, value));
            pos = p;
        } else {
            attrs.push((name, ""));
        }
    }
}

/// Decodes the common named entities and numeric character references.
/// Unknown entities are left as written.
pub fn decode_entities(s: &str) -> String {
    if !s.contains('&') {
        return s.to_string();
    }
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(i) = rest.find('&') {
        out.push_str(&rest[..i]);
        rest = &rest[i..];
        let semi = rest[1..].find(';').map(|j| j + 1).filter(|&j| j <= 12);
        let decoded = semi.and_then(|j| {
            let body = &rest[1..j];
            let ch = if let Some(num) = body.strip_prefix('#') {
                let code = match num.strip_prefix(['x', 'X']) {
                    Some(hex) => u32::from_str_radix(hex, 16).ok(),
                    None => num.parse().ok(),
                };
                code.and_then(char::from_u32)
            } else {
                match body {
                    "amp" => Some('&'),
                    "lt" => Some('<'),
                    "gt" => Some('>'),
                    "quot" => Some('"'),
                    "apos" => Some('\''),
                    "nbsp" => Some('\u{a0}'),
                    _ => None,
                }
            };
            ch.map(|c| (c, j + 1))
        });
        match decoded {
            Some((c, len)) => {
                out.push(c);
                rest = &rest[len..];
            }
            None => {
                out.push('&');
                rest = &rest[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

fn clean_link(raw: &str) -> Option<String> {
    let v = decode_entities(raw);
    let v = v.trim_matches(|c: char| c.is_ascii_whitespace());
    if v.is_empty() || v.get(..5).is_some_and(|p| p.eq_ignore_ascii_case("data:")) {
        return None;
    }
    Some(v.to_string())
}

/// Absolute URIs of `<img src>` values in document order, duplicates kept.
///
/// A `<base href>` seen before the first image replaces `base`. Links that
/// cannot be resolved are skipped.
pub fn extract_image_links(html: &[u8], base: &str) -> Vec<String> {
    let text = String::from_utf8_lossy(html);
    let mut base = base.to_string();
    let mut base_locked = false;
    let mut links = Vec::new();
    for tag in start_tags(&text) {
        match tag.name.as_str() {
            "base" if !base_locked => {
                if let Some(href) = tag.attr("href").and_then(clean_link) {
                    if let Ok(b) = resolve_uri(&base, &href) {
                        base = b;
                        base_locked = true;
                    }
                }
            }
            "img" => {
                base_locked = true;
                if let Some(src) = tag.attr("src").and_then(clean_link) {
                    if let Ok(abs) = resolve_uri(&base, &src) {
                        links.push(abs);
                    }
                }
            }
            _ => {}
        }
    }
    links
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn root_relative_src() {
        assert_eq!(extract_image_links(b"<img src=\"/x.png\">", "http://e.com/p/"), ["http://e.com/x.png"]);
    }

    #[test]
    fn case_and_quotes_and_data_uris() {
        let html = b"<IMG SRC='a.jpg'><img src=\"data:image/png;base64,AA==\">";
        assert_eq!(extract_image_links(html, "http://e.com/"), ["http://e.com/a.jpg"]);
    }

    #[test]
    fn tolerant_attributes() {
        let html = b"<img alt=\"a > b\" width=10 src=c.png/><img\nsrc = d.png ><img src=\"\"><img>";
        assert_eq!(
            extract_image_links(html, "http://e.com/d/"),
            ["http://e.com/d/c.png/", "http://e.com/d/d.png"]
        );
    }

    #[test]
    fn base_tag_before_first_image() {
        let html = b"<head><base href=\"http://cdn.net/i/\"></head><img src=a.png><base href=\"/z/\"><img src=b.png>";
        assert_eq!(
            extract_image_links(html, "http://e.com/"),
            ["http://cdn.net/i/a.png", "http://cdn.net/i/b.png"]
        );
    }

    #[test]
    fn duplicates_and_entities() {
        let html = b"<img src=\"a.png?x=1&amp;y=2\"><img src=a.png?x=1&y=2>";
        assert_eq!(extract_image_links(html, "http://e.com/"), ["http://e.com/a.png?x=1&y=2"; 2]);
    }

    #[test]
    fn comments_and_scripts_are_skipped() {
        let html = b"<!-- <img src=a.png> --><script>var s='<img src=b.png>';</script><img src=c.png>";
        assert_eq!(extract_image_links(html, "http://e.com/"), ["http://e.com/c.png"]);
    }

    #[test]
    fn garbage_does_not_panic() {
        let junk: Vec<u8> = (0u8..=255).cycle().take(4096).collect();
        let _ = extract_image_links(&junk, "http://e.com/");
        let _ = extract_image_links(b"<img src=\"unterminated", "http://e.com/");
        let _ = extract_image_links(b"<", "http://e.com/");
    }

    #[test]
    fn entities() {
        assert_eq!(decode_entities("a&amp;b&#65;&#x42;&bogus;&"), "a&bAB&bogus;&");
    }
}
