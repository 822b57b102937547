//! One line per acceptance criterion, each with its tolerance and time
//! budget. Criteria run one after another so timings do not interfere.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeSet;
use std::io::Cursor;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use warcflow::config::PipelineConfig;
use warcflow::consumer::{bind, serve, ConsumerOptions, Interleaver, Poll, StubModel};
use warcflow::filters::{bloom_params, DedupState, FilterKind, FilterSpec};
use warcflow::fixture::{damage, FixtureSpec};
use warcflow::linker::{build_uri_index, join_pairs, normalize, resolve_uri};
use warcflow::producer::{assign_shards, produce, run_producer, MemorySink, ProducerError, ProducerOptions};
use warcflow::profiler::{measure_rates, DEFAULT_RATIO_TOLERANCE};
use warcflow::warc::{write_record, WarcReader, WarcRecord};
use warcflow::wire::{
    consumer_handshake, decode_envelope, encode_envelope, frame_encode, FrameDecoder, FrameReader, FrameType,
    ProtocolTrace, RecordEnvelope, Tracer,
};

type Outcome = Result<String, String>;

/// Name, time budget in seconds, check.
type Criterion = (&'static str, f64, Box<dyn Fn() -> Outcome>);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn parse(bytes: &[u8]) -> (Vec<WarcRecord>, u64) {
    let mut reader = WarcReader::new(Cursor::new(bytes.to_vec()), "mem").unwrap();
    let records: Vec<_> = reader.by_ref().collect();
    (records, reader.skipped())
}

fn warc_round_trip() -> Outcome {
    let (_dir, fx) = common::fixture(&FixtureSpec::with_total(1000, 1));
    let mut records_total = 0;
    let mut members_damaged = 0;
    for path in &fx.files {
        let original = std::fs::read(path).unwrap();
        let (records, skipped) = parse(&original);
        check(skipped == 0, || format!("{} skipped on clean file", skipped))?;
        let rewritten: Vec<u8> = records.iter().flat_map(|r| write_record(r, true)).collect();
        check(rewritten == original, || format!("{} not bit-exact", path.display()))?;
        check(parse(&rewritten).0 == records, || "re-parse differs".into())?;
        records_total += records.len();

        let name = path.file_name().unwrap().to_str().unwrap();
        let mut starts: Vec<u64> = fx.truth.records.iter().filter(|r| r.file == name).map(|r| r.member_offset).collect();
        starts.sort_unstable();
        let ends: Vec<u64> = starts.iter().skip(1).copied().chain([original.len() as u64]).collect();
        for (&a, &b) in starts.iter().zip(&ends) {
            let mut bytes = original.clone();
            damage(&mut bytes[a as usize..b as usize], true);
            let (left, skipped) = parse(&bytes);
            check(left.len() + 1 == records.len() && skipped == 1, || {
                format!("{name}@{a}: {} of {} records survived", left.len(), records.len())
            })?;
            members_damaged += 1;
        }
    }
    check(records_total == 1000, || format!("{records_total} records"))?;
    Ok(format!("1000 records bit-exact; each of {members_damaged} members corrupted alone loses exactly 1"))
}

fn end_to_end() -> Outcome {
    let (dir, fx) = common::fixture(&FixtureSpec::with_total(1000, 2));
    let config = dir.path().join("config.json");
    std::fs::write(
        &config,
        r#"{"stages": [{"kind": "mime", "params": {"accept": "image/jpeg"}}], "threshold": 0, "flush_timeout_ms": 20}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let status = Command::new(env!("CARGO_BIN_EXE_warcflow"))
        .args(["run", "--config"])
        .arg(&config)
        .arg("--manifest")
        .arg(&fx.manifest)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    check(status.status.success(), || String::from_utf8_lossy(&status.stderr).trim().to_string())?;
    let text = std::fs::read_to_string(out.join("results.jsonl")).unwrap();
    let got: Vec<(String, String)> = text
        .lines()
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            (v["record_id"].as_str().unwrap().into(), v["payload_sha256"].as_str().unwrap().into())
        })
        .collect();
    let want: BTreeSet<(String, String)> = fx
        .truth
        .responses()
        .filter(|r| r.mime == "image/jpeg")
        .map(|r| (r.record_id.clone(), r.payload_sha256.clone()))
        .collect();
    let got_set: BTreeSet<_> = got.iter().cloned().collect();
    check(got.len() == got_set.len(), || "duplicate result lines".into())?;
    check(got_set == want, || {
        format!("{} lines, {} expected, {} in common", got.len(), want.len(), got_set.intersection(&want).count())
    })?;
    Ok(format!("{} result lines equal the ground-truth kept set", got.len()))
}

fn flow_bound() -> Outcome {
    let (dir, fx) = common::fixture(&FixtureSpec::with_total(300, 3));
    let listener = bind("127.0.0.1:0").unwrap();
    let config = PipelineConfig {
        endpoint: listener.local_addr().unwrap().to_string(),
        window: 8,
        batch_size: 4,
        flush_timeout_ms: 20,
        stages: vec![FilterSpec::new(FilterKind::Mime).param("accept", "image/jpeg")],
        out_dir: dir.path().join("out"),
        ..PipelineConfig::default()
    };
    let (ptrace, ctrace) = (ProtocolTrace::new(), ProtocolTrace::new());
    let mut copts = ConsumerOptions::from_config(&config);
    copts.trace = Some(ctrace.clone());
    let (p, c) = std::thread::scope(|s| {
        let consumer = s.spawn(|| {
            let mut model = StubModel::new(0.5).with_cost(Duration::from_millis(10));
            serve(listener, &copts, &mut model).unwrap()
        });
        let mut opts = ProducerOptions::from_config(&config, "slow");
        opts.tracer = Tracer::new(Some(ptrace.clone()), 0);
        let p = run_producer(&config, &fx.files, opts).unwrap();
        (p, consumer.join().unwrap())
    });
    check(c.samples_processed == p.data_frames_sent, || "samples lost".into())?;
    let sender = common::sender_max_in_flight(&ptrace.events()).values().copied().max().unwrap_or(0);
    let receiver = common::receiver_max_in_flight(&ctrace.events()).values().copied().max().unwrap_or(0);
    check(sender <= 8 && receiver <= 8, || format!("in flight: sender {sender}, receiver {receiver}"))?;
    Ok(format!("{} DATA frames, max in flight {sender} (sender) / {receiver} (receiver) <= 8", p.data_frames_sent))
}

fn fairness() -> Outcome {
    let mut inter = Interleaver::new(4);
    for id in 0..4u64 {
        inter.add_stream(id);
        for i in 0..100u32 {
            inter.push(id, i);
        }
        inter.end(id);
    }
    let mut draws = Vec::new();
    while let Poll::Ready { stream, .. } = inter.interleave_next() {
        draws.push(stream);
    }
    check(draws.len() == 400, || format!("{} draws", draws.len()))?;
    let mut worst = 0;
    for w in draws.windows(40) {
        let counts: Vec<usize> = (0..4).map(|s| w.iter().filter(|&&d| d == s).count()).collect();
        worst = worst.max(counts.iter().max().unwrap() - counts.iter().min().unwrap());
    }
    check(worst <= 1, || format!("count spread {worst} in some window"))?;
    Ok(format!("{} windows of 40 draws, max spread {worst}", draws.len() - 39))
}

const GOLDEN_BIN: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../conformance/golden_frames.bin");
const GOLDEN_DOC: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../conformance/golden_frames.json");

fn wire_conformance() -> Outcome {
    let bytes = std::fs::read(GOLDEN_BIN).unwrap();
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(GOLDEN_DOC).unwrap()).unwrap();
    let mut reader = FrameReader::new(bytes.as_slice());
    let mut n = 0;
    for exp in doc["frames"].as_array().unwrap() {
        let f = reader.read_frame().map_err(|e| e.to_string())?.ok_or("golden stream ended early")?;
        check(f.frame_type as u8 as u64 == exp["type_byte"].as_u64().unwrap(), || format!("frame {n} type"))?;
        check(hex::encode(&f.payload) == exp["payload_hex"].as_str().unwrap(), || format!("frame {n} payload"))?;
        if exp.get("envelope").is_some() {
            let env = decode_envelope(&f.payload).map_err(|e| e.to_string())?;
            check(encode_envelope(&env).unwrap() == f.payload, || format!("frame {n} not canonical"))?;
        }
        n += 1;
    }
    check(matches!(reader.read_frame(), Ok(None)), || "trailing golden bytes".into())?;

    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    for case in 0..1000 {
        let mut env = RecordEnvelope::new();
        for _ in 0..rng.random_range(0..8) {
            let key: String = (0..rng.random_range(0..10)).map(|_| rng.random_range('a'..='z')).collect();
            let value: Vec<u8> = (0..rng.random_range(0..64)).map(|_| rng.random()).collect();
            env.insert(key, value);
        }
        let enc = encode_envelope(&env).unwrap();
        let back = decode_envelope(&enc).map_err(|e| format!("case {case}: {e}"))?;
        check(back == env && encode_envelope(&back).unwrap() == enc, || format!("case {case} differs"))?;
    }

    let fuzz_cases = 20_000;
    let panicked = std::panic::catch_unwind(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..fuzz_cases {
            let len = rng.random_range(0..256);
            let mut buf: Vec<u8> = (0..len).map(|_| rng.random()).collect();
            if rng.random_bool(0.5) && !buf.is_empty() {
                // Plausible header so the payload path is exercised too.
                buf[0] = [0x01, 0x02, 0x10, 0x20, 0x7E, 0x7F][rng.random_range(0..6)];
            }
            let _ = decode_envelope(&buf);
            let mut dec = FrameDecoder::new(1 << 16);
            dec.push(&buf);
            while let Ok(Some(f)) = dec.next_frame() {
                let _ = decode_envelope(&f.payload);
            }
            let _ = frame_encode(FrameType::Data, &buf);
        }
    })
    .is_err();
    check(!panicked, || "decoder panicked on fuzzed input".into())?;
    Ok(format!("{n} golden frames, 1000 random round-trips exact, {fuzz_cases} fuzz inputs without abort"))
}

fn dedup() -> Outcome {
    let params = bloom_params(1_000_000, 0.01).map_err(|e| e.to_string())?;
    check(params == (9_585_059, 7), || format!("bloom_params(1e6, 0.01) = {params:?}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(10_000);
    let mut state = DedupState::bloom(10_000, 0.01).unwrap();
    let keys: Vec<[u8; 32]> = (0..10_000).map(|_| rng.random()).collect();
    for k in &keys {
        state.check_and_insert(k);
    }
    let negatives = keys.iter().filter(|k| !state.contains(k)).count();
    check(negatives == 0, || format!("{negatives} false negatives"))?;
    let trials = 100_000;
    let fp = (0..trials).filter(|_| state.contains(&rng.random::<[u8; 32]>())).count();
    let fpr = fp as f64 / trials as f64;
    check(fpr <= 0.02, || format!("measured FPR {fpr}"))?;
    Ok(format!("(9585059, 7); measured FPR {fpr:.4} <= 0.02 over {trials} probes; 0 false negatives"))
}

fn join() -> Outcome {
    let cases = common::reference_examples();
    for (r, want) in &cases {
        let got = resolve_uri(common::REFERENCE_BASE, r).map_err(|e| e.to_string())?;
        check(&got == want, || format!("resolve({r:?}) = {got}, want {want}"))?;
    }
    let spec = FixtureSpec {
        seed: 5040,
        files: 3,
        pages: 50,
        jpeg_images: 25,
        png_images: 15,
        other: 20,
        duplicates: 0,
        ..FixtureSpec::default()
    };
    let (_dir, fx) = common::fixture(&spec);
    let index = Arc::new(build_uri_index(&fx.files).map_err(|e| e.to_string())?);
    let got: Vec<(String, String, String)> = join_pairs(&fx.files, index)
        .map(|p| {
            let p = p.unwrap();
            (p.page.record_id(), p.image.record_id(), normalize(&p.link_uri).unwrap())
        })
        .collect();
    let brute = common::brute_force_join(&fx.files);
    check(got == brute, || format!("{} pairs joined, {} by brute force", got.len(), brute.len()))?;
    Ok(format!("{} pairs equal nested-loop join; {} reference examples resolve", got.len(), cases.len()))
}

fn shards() -> Outcome {
    let files = |sizes: &[u64]| -> Vec<(PathBuf, u64)> {
        sizes.iter().enumerate().map(|(i, &s)| (PathBuf::from(i.to_string()), s)).collect()
    };
    let worked = assign_shards(&files(&[5, 4, 3, 3, 3]), 2).makespan();
    let opt = common::brute_force_makespan(&[5, 4, 3, 3, 3], 2);
    check((worked, opt) == (10, 9), || format!("worked case {worked} vs {opt}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut instances = 0;
    let mut worst: f64 = 0.0;
    for n in 1..=8usize {
        for k in 1..=4usize {
            for _ in 0..60 {
                let sizes: Vec<u64> = (0..n).map(|_| rng.random_range(0..100)).collect();
                let lpt = assign_shards(&files(&sizes), k).makespan();
                let opt = common::brute_force_makespan(&sizes, k);
                check(3 * k as u64 * lpt <= (4 * k as u64 - 1) * opt, || format!("{sizes:?} k={k}: {lpt} vs {opt}"))?;
                if opt > 0 {
                    worst = worst.max(lpt as f64 / opt as f64);
                }
                instances += 1;
            }
        }
    }
    Ok(format!("[5,4,3,3,3]/k=2 gives 10 vs 9; {instances} instances within bound, worst ratio {worst:.3}"))
}

fn profiler() -> Outcome {
    let (p, c) = common::rate_controlled_run(250.0, 1000.0, 500);
    let report = measure_rates(&[p], &c, DEFAULT_RATIO_TOLERANCE).map_err(|e| e.to_string())?;
    let off = |got: f64, want: f64| (got - want).abs() / want;
    check(off(report.producer_rate, 250.0) <= 0.1, || format!("producer rate {:.1}", report.producer_rate))?;
    check(off(report.consumer_rate, 1000.0) <= 0.1, || format!("consumer rate {:.1}", report.consumer_rate))?;
    check(report.recommended_ratio == Some(4), || format!("ratio {:?}", report.recommended_ratio))?;
    Ok(format!(
        "producer {:.1}/s, consumer {:.1}/s, raw ratio {:.2}, recommended 4",
        report.producer_rate,
        report.consumer_rate,
        report.raw_ratio.unwrap_or(f64::NAN)
    ))
}

fn accounting(dir: &Path) -> Outcome {
    let (_fx_dir, fx) = common::fixture(&FixtureSpec {
        corrupt: 5,
        ..FixtureSpec::with_total(400, 10)
    });
    let config = PipelineConfig {
        stages: vec![
            FilterSpec::new(FilterKind::Mime).param("accept", "image/*"),
            FilterSpec::new(FilterKind::Size).param("min_bytes", "600"),
            FilterSpec::new(FilterKind::Dedup).param("mode", "exact"),
        ],
        out_dir: dir.join("out"),
        ..PipelineConfig::default()
    };
    let opts = ProducerOptions::default();
    let mut runs = 0;
    let clean = produce(config.chain().unwrap(), &fx.files, &opts, MemorySink::default()).map_err(|e| e.to_string())?;
    check(clean.is_balanced(), || format!("clean run: {clean:?}"))?;
    check(clean.data_frames_sent == clean.records_kept, || "frames != kept".into())?;
    runs += 1;
    for fail_after in [0, 3, 25] {
        let sink = MemorySink {
            fail_after: Some(fail_after),
            ..Default::default()
        };
        match produce(config.chain().unwrap(), &fx.files, &opts, sink) {
            Err(ProducerError::ConnectionLost { stats, .. }) => {
                check(stats.is_balanced(), || format!("lost after {fail_after}: {stats:?}"))?
            }
            other => return Err(format!("expected ConnectionLost, got {other:?}")),
        }
        runs += 1;
    }

    // Over TCP, with a consumer that hangs up after three frames.
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let tcp = PipelineConfig {
        endpoint: listener.local_addr().unwrap().to_string(),
        window: 4,
        ..config.clone()
    };
    let closer = std::thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut reader = FrameReader::new(stream.try_clone().unwrap());
        let mut writer = stream;
        consumer_handshake(&mut reader, &mut writer, 4).unwrap();
        for _ in 0..3 {
            let _ = reader.read_frame();
        }
    });
    let result = run_producer(&tcp, &fx.files, ProducerOptions::from_config(&tcp, "p"));
    closer.join().unwrap();
    match result {
        Err(ProducerError::ConnectionLost { stats, .. }) => {
            check(stats.is_balanced(), || format!("tcp loss: {stats:?}"))?
        }
        other => return Err(format!("expected ConnectionLost over TCP, got {other:?}")),
    }
    runs += 1;
    Ok(format!(
        "records_read = kept + drops on {runs} runs ({} read, {} kept, drops {:?})",
        clean.records_read, clean.records_kept, clean.drops
    ))
}

#[test]
fn acceptance() {
    let scratch = tempfile::tempdir().unwrap();
    let criteria: Vec<Criterion> = vec![
        ("warc round-trip and robustness", 5.0, Box::new(warc_round_trip)),
        ("end-to-end correctness", 10.0, Box::new(end_to_end)),
        ("flow-control bound (W=8)", 10.0, Box::new(flow_bound)),
        ("interleaving fairness", 2.0, Box::new(fairness)),
        ("wire conformance", 10.0, Box::new(wire_conformance)),
        ("dedup sizing and FPR", 10.0, Box::new(dedup)),
        ("multimodal join", 5.0, Box::new(join)),
        ("shard assignment (LPT)", 5.0, Box::new(shards)),
        ("profiler ratio", 15.0, Box::new(profiler)),
        ("accounting identities", 5.0, Box::new({
            let dir = scratch.path().to_path_buf();
            move || accounting(&dir)
        })),
    ];
    let mut failed = Vec::new();
    for (name, budget, run) in &criteria {
        let started = Instant::now();
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(run))
            .unwrap_or_else(|_| Err("panicked".to_string()));
        let secs = started.elapsed().as_secs_f64();
        let outcome = match outcome {
            Ok(detail) if secs > *budget => Err(format!("{detail}; took {secs:.2} s, budget {budget} s")),
            other => other,
        };
        match &outcome {
            Ok(detail) => println!("PASS  {name}: {detail} [{secs:.2} s / {budget} s]"),
            Err(why) => {
                println!("FAIL  {name}: {why} [{secs:.2} s / {budget} s]");
                failed.push(*name);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed.len(), criteria.len());
    assert!(failed.is_empty(), "failed: {failed:?}");
}
