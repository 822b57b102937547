#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use warcflow::fixture::{gen_fixture, Fixture, FixtureSpec};
use warcflow::linker::{extract_image_links, normalize};
use warcflow::warc::{extract_http_payload, iterate_records, WarcType};
use warcflow::wire::{TraceEvent, TraceKind};

pub fn fixture(spec: &FixtureSpec) -> (tempfile::TempDir, Fixture) {
    let dir = tempfile::tempdir().unwrap();
    let fx = gen_fixture(spec, dir.path()).unwrap();
    (dir, fx)
}

/// Largest number of DATA frames a sender had outstanding, per connection.
/// Every CREDIT received after the initial grant covers one earlier DATA.
pub fn sender_max_in_flight(events: &[TraceEvent]) -> BTreeMap<u64, i64> {
    let mut sent: BTreeMap<u64, i64> = BTreeMap::new();
    let mut covered: BTreeMap<u64, i64> = BTreeMap::new();
    let mut peak: BTreeMap<u64, i64> = BTreeMap::new();
    for e in events {
        match e.kind {
            TraceKind::DataSent => *sent.entry(e.connection).or_default() += 1,
            TraceKind::CreditReceived(n) => *covered.entry(e.connection).or_default() += n as i64,
            _ => continue,
        }
        let now = sent.get(&e.connection).copied().unwrap_or(0) - covered.get(&e.connection).copied().unwrap_or(0);
        let p = peak.entry(e.connection).or_default();
        *p = (*p).max(now);
    }
    peak
}

/// Same measure from the receiver's books: DATA received minus credit
/// granted after the initial window.
pub fn receiver_max_in_flight(events: &[TraceEvent]) -> BTreeMap<u64, i64> {
    let mut balance: BTreeMap<u64, i64> = BTreeMap::new();
    let mut peak: BTreeMap<u64, i64> = BTreeMap::new();
    for e in events {
        let b = balance.entry(e.connection).or_default();
        match e.kind {
            TraceKind::DataReceived => *b += 1,
            TraceKind::CreditGranted(n) => *b -= n as i64,
            _ => continue,
        }
        let now = *b;
        let p = peak.entry(e.connection).or_default();
        *p = (*p).max(now);
    }
    peak
}

/// Optimal makespan by trying every assignment of files to `k` workers.
pub fn brute_force_makespan(sizes: &[u64], k: usize) -> u64 {
    fn go(sizes: &[u64], loads: &mut [u64], best: &mut u64) {
        let Some((&first, rest)) = sizes.split_first() else {
            *best = (*best).min(loads.iter().copied().max().unwrap_or(0));
            return;
        };
        for w in 0..loads.len() {
            loads[w] += first;
            if loads[w] < *best {
                go(rest, loads, best);
            }
            loads[w] -= first;
        }
    }
    let mut best = u64::MAX;
    go(sizes, &mut vec![0; k], &mut best);
    if sizes.is_empty() {
        0
    } else {
        best
    }
}

/// (page id, image id, link) triples by comparing every page link with
/// every image record, in page order then link order.
pub fn brute_force_join(files: &[PathBuf]) -> Vec<(String, String, String)> {
    let mut pages = Vec::new();
    let mut images: Vec<(String, String)> = Vec::new();
    for file in files {
        for rec in iterate_records(file).unwrap() {
            if rec.warc_type() != WarcType::Response {
                continue;
            }
            let Ok(http) = extract_http_payload(&rec) else { continue };
            let uri = rec.target_uri().unwrap_or_default().to_string();
            if http.mime_type == "text/html" {
                pages.push((rec.record_id().to_string(), uri, http.body));
            } else if http.mime_type.starts_with("image/") {
                if let Ok(n) = normalize(&uri) {
                    images.push((rec.record_id().to_string(), n));
                }
            }
        }
    }
    let mut out = Vec::new();
    for (page_id, base, body) in &pages {
        for link in extract_image_links(body, base) {
            let Ok(link) = normalize(&link) else { continue };
            // Later records win when two images share a URI.
            if let Some((image_id, _)) = images.iter().rev().find(|(_, u)| *u == link) {
                out.push((page_id.clone(), image_id.clone(), link));
            }
        }
    }
    out
}

pub const REFERENCE_BASE: &str = "http://a/b/c/d;p?q";

/// (reference, expected) pairs for resolution against [`REFERENCE_BASE`].
pub fn reference_examples() -> Vec<(String, String)> {
    include_str!("../data/reference_resolution.tsv")
        .lines()
        .filter(|l| !l.starts_with("# ") && !l.is_empty())
        .map(|l| {
            let (r, want) = l.split_once('\t').unwrap();
            let r = if r == "<empty>" { "" } else { r };
            (r.to_string(), want.to_string())
        })
        .collect()
}

/// Holds samples to a fixed rate: the n-th sample passes no earlier than
/// `n / rate` seconds after the first.
pub struct Pace {
    rate: f64,
    state: std::sync::Mutex<Option<(std::time::Instant, u64)>>,
}

impl Pace {
    pub fn new(rate: f64) -> Self {
        Self {
            rate,
            state: std::sync::Mutex::new(None),
        }
    }
}

impl warcflow::filters::Stage for Pace {
    fn name(&self) -> &str {
        "pace"
    }

    fn evaluate(
        &self,
        _: &warcflow::wire::RecordEnvelope,
        _: &mut warcflow::filters::Derived,
    ) -> Result<warcflow::filters::Decision, warcflow::filters::StageFailure> {
        let mut st = self.state.lock().unwrap();
        let (start, n) = st.get_or_insert_with(|| (std::time::Instant::now(), 0));
        let due = *start + std::time::Duration::from_secs_f64(*n as f64 / self.rate);
        *n += 1;
        let now = std::time::Instant::now();
        if due > now {
            std::thread::sleep(due - now);
        }
        Ok(warcflow::filters::Decision::Keep)
    }

    fn is_serialized(&self) -> bool {
        true
    }
}

/// One producer paced at `producer_rate` kept records/s feeding a consumer
/// whose model costs `1 / consumer_rate` seconds per sample.
pub fn rate_controlled_run(
    producer_rate: f64,
    consumer_rate: f64,
    total_records: usize,
) -> (warcflow::producer::ProducerStats, warcflow::consumer::ConsumerStats) {
    use warcflow::consumer::{bind, serve, ConsumerOptions, StubModel};
    use warcflow::producer::{produce, ProducerOptions};
    use warcflow::wire::{DataSender, SenderOptions};

    let (dir, fx) = fixture(&FixtureSpec::with_total(total_records, 77));
    let listener = bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let config = warcflow::config::PipelineConfig {
        out_dir: dir.path().join("out"),
        threshold: 0.5,
        ..Default::default()
    };
    let copts = ConsumerOptions::from_config(&config);
    let cost = std::time::Duration::from_secs_f64(1.0 / consumer_rate);
    std::thread::scope(|s| {
        let consumer = s.spawn(move || {
            let mut model = StubModel::new(0.5).with_cost(cost);
            serve(listener, &copts, &mut model).unwrap()
        });
        let chain = warcflow::filters::compose(vec![Box::new(Pace::new(producer_rate))]);
        let opts = ProducerOptions::from_config(&config, "paced");
        let sender = DataSender::connect(addr, SenderOptions::default()).unwrap();
        let p = produce(chain, &fx.files, &opts, sender).unwrap();
        (p, consumer.join().unwrap())
    })
}
