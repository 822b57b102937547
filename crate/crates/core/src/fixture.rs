//! Deterministic synthetic archives with ground truth.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::warc::{write_record, WarcError, WarcRecord, WarcType};

pub const MANIFEST_NAME: &str = "manifest.txt";
pub const GROUND_TRUTH_NAME: &str = "ground_truth.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixtureSpec {
    pub seed: u64,
    pub files: usize,
    /// text/html responses.
    pub pages: usize,
    pub jpeg_images: usize,
    pub png_images: usize,
    /// Non-image, non-page records: other media types and non-response types.
    pub other: usize,
    /// Extra responses repeating an earlier response payload.
    pub duplicates: usize,
    /// Additional records whose gzip member (or header) is damaged.
    pub corrupt: usize,
    pub max_links_per_page: usize,
    /// Probability that a link points at an image absent from the archive.
    pub missing_link_rate: f64,
    pub compress: bool,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self {
            seed: 42,
            files: 4,
            pages: 20,
            jpeg_images: 25,
            png_images: 10,
            other: 35,
            duplicates: 10,
            corrupt: 0,
            max_links_per_page: 6,
            missing_link_rate: 0.15,
            compress: true,
        }
    }
}

impl FixtureSpec {
    /// A mixed fixture with `total` intact records.
    pub fn with_total(total: usize, seed: u64) -> Self {
        let pages = total / 5;
        let jpeg_images = total / 4;
        let png_images = total / 10;
        let duplicates = total / 10;
        Self {
            seed,
            pages,
            jpeg_images,
            png_images,
            duplicates,
            other: total - pages - jpeg_images - png_images - duplicates,
            ..Self::default()
        }
    }

    pub fn intact_records(&self) -> usize {
        self.pages + self.jpeg_images + self.png_images + self.other + self.duplicates
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub record_id: String,
    pub file: String,
    pub member_offset: u64,
    pub warc_type: String,
    pub target_uri: String,
    /// HTTP media type for responses, empty otherwise.
    pub mime: String,
    /// SHA-256 of the HTTP body for responses, of the block otherwise.
    pub payload_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthPair {
    pub page_id: String,
    pub image_id: String,
    /// Normalized URI of the image.
    pub image_uri: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthCorrupt {
    pub file: String,
    pub member_offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub spec: FixtureSpec,
    /// File names relative to the fixture directory, in manifest order.
    pub files: Vec<String>,
    /// Intact records in manifest order, record order within a file.
    pub records: Vec<TruthRecord>,
    pub corrupt: Vec<TruthCorrupt>,
    /// Page/image pairs in page order, link order within a page.
    pub pairs: Vec<TruthPair>,
    /// Image links whose target is not in the archive.
    pub missing_links: u64,
}

impl GroundTruth {
    pub fn read(dir: impl AsRef<Path>) -> Result<Self, WarcError> {
        let text = std::fs::read_to_string(dir.as_ref().join(GROUND_TRUTH_NAME))?;
        serde_json::from_str(&text).map_err(|e| WarcError::Io(std::io::Error::other(e)))
    }

    pub fn responses(&self) -> impl Iterator<Item = &TruthRecord> {
        self.records.iter().filter(|r| r.warc_type == "response")
    }

    pub fn manifest_paths(&self, dir: &Path) -> Vec<PathBuf> {
        self.files.iter().map(|f| dir.join(f)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub dir: PathBuf,
    pub manifest: PathBuf,
    pub files: Vec<PathBuf>,
    pub truth: GroundTruth,
}

#[derive(Clone)]
enum Body {
    Page { links: Vec<Link> },
    Image,
    Other,
}

#[derive(Clone)]
struct Link {
    /// Index into the image table, `None` for a missing target.
    target: Option<usize>,
    /// Spelled relative to the page's own URI.
    relative: bool,
}

struct Planned {
    warc_type: WarcType,
    record_id: String,
    uri: String,
    mime: String,
    body: Vec<u8>,
    chunked: bool,
    kind: Body,
    corrupt: bool,
}

struct Image {
    host: usize,
    path: String,
    record: usize,
}

impl Image {
    fn uri(&self) -> String {
        format!("http://site{}.example{}", self.host, self.path)
    }
}

const HOSTS: usize = 5;

fn uuid(rng: &mut ChaCha8Rng) -> String {
    let mut b = [0u8; 16];
    rng.fill_bytes(&mut b);
    b[6] = (b[6] & 0x0f) | 0x40;
    b[8] = (b[8] & 0x3f) | 0x80;
    let h = hex::encode(b);
    format!("<urn:uuid:{}-{}-{}-{}-{}>", &h[..8], &h[8..12], &h[12..16], &h[16..20], &h[20..])
}

fn random_bytes(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> Vec<u8> {
    let mut v = vec![0u8; rng.random_range(lo..hi)];
    rng.fill_bytes(&mut v);
    v
}

fn jpeg(rng: &mut ChaCha8Rng) -> Vec<u8> {
    let mut v = vec![0xFF, 0xD8, 0xFF, 0xE0];
    v.extend(random_bytes(rng, 200, 2000));
    v.extend([0xFF, 0xD9]);
    v
}

fn png(rng: &mut ChaCha8Rng) -> Vec<u8> {
    let mut v = b"\x89PNG\r\n\x1a\n".to_vec();
    v.extend(random_bytes(rng, 200, 2000));
    v
}

fn words(rng: &mut ChaCha8Rng, n: usize) -> String {
    const W: [&str; 12] = [
        "archive", "crawl", "image", "page", "lorem", "ipsum", "data", "web", "link", "text",
        "sample", "record",
    ];
    (0..n).map(|_| W[rng.random_range(0..W.len())]).collect::<Vec<_>>().join(" ")
}

/// Renders a link to `target_uri` from a page at `host`/`dir`, in one of
/// several equivalent spellings.
fn spell_link(rng: &mut ChaCha8Rng, page_host: usize, target_host: usize, path: &str) -> (String, bool) {
    let abs = format!("http://site{target_host}.example{path}");
    let escaped = |s: String| s.replace('&', "&amp;");
    let form = if page_host == target_host {
        rng.random_range(0..6)
    } else {
        rng.random_range(2..6)
    };
    let spelled = escaped(match form {
        0 => path.to_string(),
        1 => format!("..{path}"),
        2 => abs,
        3 => format!("http://SITE{target_host}.Example{path}"),
        4 => format!("//site{target_host}.example:80{path}"),
        _ => format!("{abs}#view"),
    });
    (spelled, form < 2)
}

fn render_page(rng: &mut ChaCha8Rng, host: usize, links: &[String]) -> Vec<u8> {
    let mut html = String::from("<!DOCTYPE html>\n<html><head><title>");
    html.push_str(&words(rng, 3));
    html.push_str("</title></head>\n<body>\n");
    for link in links {
        let n = rng.random_range(3..12);
        let _ = writeln!(html, "<p>{}</p>", words(rng, n));
        match rng.random_range(0..3) {
            0 => {
                let _ = writeln!(html, "<img src=\"{link}\" alt=\"{}\">", words(rng, 2));
            }
            1 => {
                let _ = writeln!(html, "<IMG class=pic SRC='{link}' width=100>");
            }
            _ => {
                let _ = writeln!(html, "<img\n  alt=x\n  src=\"{link}\"/>");
            }
        }
        if rng.random_bool(0.2) {
            html.push_str("<img src=\"data:image/png;base64,iVBORw0KGgo=\">\n");
        }
        if rng.random_bool(0.1) {
            let _ = writeln!(html, "<a href=\"http://site{host}.example/img/none.jpg\">link</a>");
        }
    }
    html.push_str("</body></html>\n");
    html.into_bytes()
}

fn chunk(body: &[u8], rng: &mut ChaCha8Rng) -> Vec<u8> {
    let mut out = Vec::with_capacity(body.len() + 64);
    let mut rest = body;
    while !rest.is_empty() {
        let n = rng.random_range(1..=rest.len().min(700));
        out.extend(format!("{n:x}\r\n").as_bytes());
        out.extend(&rest[..n]);
        out.extend(b"\r\n");
        rest = &rest[n..];
    }
    out.extend(b"0\r\n\r\n");
    out
}

fn http_block(mime: &str, body: &[u8], chunked: bool, rng: &mut ChaCha8Rng) -> Vec<u8> {
    let mut head = String::from("HTTP/1.1 200 OK\r\n");
    let _ = write!(head, "Content-Type: {mime}\r\n");
    let wire_body = if chunked {
        head.push_str("Transfer-Encoding: chunked\r\n");
        chunk(body, rng)
    } else {
        let _ = write!(head, "Content-Length: {}\r\n", body.len());
        body.to_vec()
    };
    head.push_str("\r\n");
    let mut block = head.into_bytes();
    block.extend(wire_body);
    block
}

fn sha_hex(b: &[u8]) -> String {
    hex::encode(Sha256::digest(b))
}

/// Writes the fixture files, `manifest.txt` and `ground_truth.json` to `dir`.
pub fn gen_fixture(spec: &FixtureSpec, dir: impl AsRef<Path>) -> Result<Fixture, WarcError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| WarcError::unreadable(dir, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut planned: Vec<Planned> = Vec::new();

    let mut images = Vec::new();
    for i in 0..spec.jpeg_images + spec.png_images {
        let is_jpeg = i < spec.jpeg_images;
        let host = rng.random_range(0..HOSTS);
        let query = if rng.random_bool(0.2) { "?v=1&s=2" } else { "" };
        let ext = if is_jpeg { "jpg" } else { "png" };
        let path = format!("/static/img{i}.{ext}{query}");
        let body = if is_jpeg { jpeg(&mut rng) } else { png(&mut rng) };
        images.push(Image {
            host,
            path,
            record: planned.len(),
        });
        planned.push(Planned {
            warc_type: WarcType::Response,
            record_id: uuid(&mut rng),
            uri: images[i].uri(),
            mime: if is_jpeg { "image/jpeg" } else { "image/png" }.into(),
            body,
            chunked: false,
            kind: Body::Image,
            corrupt: false,
        });
    }

    for i in 0..spec.pages {
        let host = rng.random_range(0..HOSTS);
        let n_links = rng.random_range(0..=spec.max_links_per_page);
        let mut links = Vec::new();
        let mut spelled = Vec::new();
        for _ in 0..n_links {
            if images.is_empty() || rng.random_bool(spec.missing_link_rate) {
                let h = rng.random_range(0..HOSTS);
                let path = format!("/static/missing{}.jpg", rng.random_range(0..1000));
                spelled.push(spell_link(&mut rng, host, h, &path).0);
                links.push(Link {
                    target: None,
                    relative: false,
                });
            } else {
                let t = rng.random_range(0..images.len());
                let (link, relative) = spell_link(&mut rng, host, images[t].host, &images[t].path);
                spelled.push(link);
                links.push(Link {
                    target: Some(t),
                    relative,
                });
            }
        }
        let body = render_page(&mut rng, host, &spelled);
        planned.push(Planned {
            warc_type: WarcType::Response,
            record_id: uuid(&mut rng),
            uri: format!("http://site{host}.example/dir{}/page{i}.html", i % 7),
            mime: "text/html".into(),
            body,
            chunked: rng.random_bool(0.3),
            kind: Body::Page { links },
            corrupt: false,
        });
    }

    for i in 0..spec.other {
        let (warc_type, mime, body) = match i % 5 {
            0 => (WarcType::Response, "text/css", words(&mut rng, 20).into_bytes()),
            1 => (WarcType::Response, "application/json", format!("{{\"n\":{i}}}").into_bytes()),
            2 => (WarcType::Request, "", format!("GET /r{i} HTTP/1.1\r\nHost: site0.example\r\n\r\n").into_bytes()),
            3 => (WarcType::Metadata, "", format!("via: crawl\nindex: {i}\n").into_bytes()),
            _ => (WarcType::Response, "text/plain", words(&mut rng, 40).into_bytes()),
        };
        planned.push(Planned {
            warc_type,
            record_id: uuid(&mut rng),
            uri: format!("http://site{}.example/other/{i}", i % HOSTS),
            mime: mime.into(),
            body,
            chunked: false,
            kind: Body::Other,
            corrupt: false,
        });
    }

    let originals: Vec<usize> = (0..planned.len())
        .filter(|&i| planned[i].warc_type == WarcType::Response)
        .collect();
    for i in 0..spec.duplicates {
        if originals.is_empty() {
            break;
        }
        let src = originals[rng.random_range(0..originals.len())];
        let (mime, body) = (planned[src].mime.clone(), planned[src].body.clone());
        // A copied page keeps its links, but relative ones now resolve
        // against the mirror host and miss.
        let kind = match &planned[src].kind {
            Body::Page { links } => Body::Page {
                links: links
                    .iter()
                    .map(|l| Link {
                        target: l.target.filter(|_| !l.relative),
                        relative: l.relative,
                    })
                    .collect(),
            },
            _ => Body::Other,
        };
        planned.push(Planned {
            warc_type: WarcType::Response,
            record_id: uuid(&mut rng),
            uri: format!("http://mirror.example/dup{i}"),
            mime,
            body,
            chunked: false,
            kind,
            corrupt: false,
        });
    }

    for i in 0..spec.corrupt {
        planned.push(Planned {
            warc_type: WarcType::Resource,
            record_id: uuid(&mut rng),
            uri: format!("http://site0.example/corrupt/{i}"),
            mime: String::new(),
            body: random_bytes(&mut rng, 300, 900),
            chunked: false,
            kind: Body::Other,
            corrupt: true,
        });
    }

    let mut order: Vec<usize> = (0..planned.len()).collect();
    order.shuffle(&mut rng);
    let n_files = spec.files.max(1);
    let ext = if spec.compress { "warc.gz" } else { "warc" };
    let names: Vec<String> = (0..n_files).map(|f| format!("fixture-{f:03}.{ext}")).collect();
    let mut file_of = vec![0usize; planned.len()];
    for (pos, &rec) in order.iter().enumerate() {
        file_of[rec] = pos % n_files;
    }

    let mut buffers = vec![Vec::new(); n_files];
    let mut located = vec![(String::new(), 0u64); planned.len()];
    let mut records = Vec::new();
    let mut corrupt = Vec::new();
    let mut stamp = 0u64;
    for f in 0..n_files {
        for &rec in order.iter().filter(|&&r| file_of[r] == f) {
            let p = &planned[rec];
            let block = if p.warc_type == WarcType::Response {
                http_block(&p.mime, &p.body, p.chunked, &mut rng)
            } else {
                p.body.clone()
            };
            let content_type = match p.warc_type {
                WarcType::Response => "application/http; msgtype=response",
                WarcType::Request => "application/http; msgtype=request",
                WarcType::Metadata => "application/warc-fields",
                _ => "application/octet-stream",
            };
            stamp += 1;
            let record = WarcRecord::builder(p.warc_type)
                .record_id(p.record_id.clone())
                .date(format!(
                    "2024-03-{:02}T{:02}:{:02}:{:02}Z",
                    1 + stamp / 86_400 % 28,
                    stamp / 3600 % 24,
                    stamp / 60 % 60,
                    stamp % 60
                ))
                .target_uri(p.uri.clone())
                .header("Content-Type", content_type)
                .block(block)
                .build()?;
            let offset = buffers[f].len() as u64;
            let mut bytes = write_record(&record, spec.compress);
            if p.corrupt {
                damage(&mut bytes, spec.compress);
                corrupt.push(TruthCorrupt {
                    file: names[f].clone(),
                    member_offset: offset,
                });
            } else {
                records.push(TruthRecord {
                    record_id: p.record_id.clone(),
                    file: names[f].clone(),
                    member_offset: offset,
                    warc_type: p.warc_type.as_str().into(),
                    target_uri: p.uri.clone(),
                    mime: p.mime.clone(),
                    payload_sha256: sha_hex(&p.body),
                });
            }
            located[rec] = (names[f].clone(), offset);
            buffers[f].extend(bytes);
        }
    }

    // Pages in manifest order; each image URI is unique, so the image id is
    // fixed by the link target.
    let mut pairs = Vec::new();
    let mut missing_links = 0;
    let intact: HashSet<&str> = records.iter().map(|r| r.record_id.as_str()).collect();
    let by_id: HashMap<&str, usize> = planned.iter().enumerate().map(|(i, p)| (p.record_id.as_str(), i)).collect();
    for r in &records {
        let Body::Page { links } = &planned[by_id[r.record_id.as_str()]].kind else { continue };
        for link in links {
            match link.target {
                Some(t) if intact.contains(planned[images[t].record].record_id.as_str()) => {
                    pairs.push(TruthPair {
                        page_id: r.record_id.clone(),
                        image_id: planned[images[t].record].record_id.clone(),
                        image_uri: images[t].uri(),
                    });
                }
                _ => missing_links += 1,
            }
        }
    }

    let mut files = Vec::new();
    for (name, bytes) in names.iter().zip(&buffers) {
        let path = dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| WarcError::unreadable(&path, e))?;
        files.push(path);
    }
    let manifest = dir.join(MANIFEST_NAME);
    let mut listing = String::new();
    for name in &names {
        listing.push_str(name);
        listing.push('\n');
    }
    std::fs::write(&manifest, listing).map_err(|e| WarcError::unreadable(&manifest, e))?;

    let truth = GroundTruth {
        spec: spec.clone(),
        files: names,
        records,
        corrupt,
        pairs,
        missing_links,
    };
    let truth_path = dir.join(GROUND_TRUTH_NAME);
    let json = serde_json::to_string_pretty(&truth).expect("ground truth serializes");
    std::fs::write(&truth_path, json).map_err(|e| WarcError::unreadable(&truth_path, e))?;

    Ok(Fixture {
        dir: dir.to_path_buf(),
        manifest,
        files,
        truth,
    })
}

/// Makes one written record unreadable: garbles compressed data in the
/// middle of a gzip member, or the version line of a plain record.
pub fn damage(bytes: &mut [u8], compressed: bool) {
    if compressed {
        let (mid, end) = (bytes.len() / 2, bytes.len() - 8);
        for b in &mut bytes[mid.saturating_sub(4)..(mid + 4).min(end)] {
            *b ^= 0x55;
        }
    } else {
        bytes[..4].copy_from_slice(b"XXXX");
    }
}
