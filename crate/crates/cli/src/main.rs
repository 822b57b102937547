use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use warcflow::config::{parse_config, Mode, PipelineConfig};
use warcflow::consumer::{bind, serve, ConsumerOptions, ConsumerStats, StubModel};
use warcflow::fixture::{gen_fixture, FixtureSpec};
use warcflow::linker::{build_uri_index, join_pairs, UriIndex};
use warcflow::producer::{assign_shards, run_producer, sized_files, ProducerOptions, ProducerStats, Source};
use warcflow::profiler::{measure_rates, DEFAULT_RATIO_TOLERANCE};
use warcflow::warc::{extract_http_payload, iterate_records, read_manifest, WarcType};

const ENDPOINT_ENV: &str = "WARCFLOW_CONSUMER";

#[derive(Parser)]
#[command(name = "warcflow", version, about = "Filter web archives on CPU workers and stream them to batch consumers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Stream one worker's shard of the manifest to a consumer.
    Produce(ProduceArgs),
    /// Accept producers and score their samples in batches.
    Consume(ConsumeArgs),
    /// Producers and a consumer in one process over loopback TCP.
    Run(RunArgs),
    /// Recommend a producer:consumer ratio from run statistics.
    Profile(ProfileArgs),
    /// Index image responses by normalized target URI.
    LinkIndex(LinkIndexArgs),
    /// Pair pages with the images they embed, as JSON lines.
    Join(JoinArgs),
    /// List the records of a WARC file.
    Ls(LsArgs),
    /// Write a deterministic synthetic archive with ground truth.
    GenFixture(GenFixtureArgs),
    /// Print the effective configuration as JSON.
    ConfigDump(ConfigDumpArgs),
}

/// Scalar overrides shared by the pipeline subcommands.
#[derive(Args, Clone, Default)]
struct Overrides {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    window: Option<u32>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    flush_timeout_ms: Option<u64>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    parallelism: Option<usize>,
}

impl Overrides {
    fn load(&self) -> Result<PipelineConfig> {
        let mut config = match &self.config {
            Some(path) => parse_config(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(v) = self.window {
            config.window = v;
        }
        if let Some(v) = self.batch_size {
            config.batch_size = v;
        }
        if let Some(v) = self.flush_timeout_ms {
            config.flush_timeout_ms = v;
        }
        if let Some(v) = self.threshold {
            config.threshold = v;
        }
        if let Some(v) = self.parallelism {
            config.parallelism = v;
        }
        Ok(config)
    }
}

#[derive(Args)]
struct ProduceArgs {
    #[command(flatten)]
    common: Overrides,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = 0)]
    worker_id: usize,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Consumer address; also read from WARCFLOW_CONSUMER.
    #[arg(long, env = ENDPOINT_ENV)]
    endpoint: Option<String>,
    /// Send (page, image) pairs found through this URI index.
    #[arg(long)]
    index: Option<PathBuf>,
    /// Also write the producer stats JSON here.
    #[arg(long)]
    stats: Option<PathBuf>,
}

#[derive(Args)]
struct ConsumeArgs {
    #[command(flatten)]
    common: Overrides,
    #[arg(long)]
    listen: Option<String>,
    #[arg(long)]
    producers: Option<usize>,
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Overrides,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    producers: Option<usize>,
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    index: Option<PathBuf>,
}

#[derive(Args)]
struct ProfileArgs {
    /// Glob matching producer stats files.
    #[arg(long)]
    producer_stats: String,
    #[arg(long)]
    consumer_stats: PathBuf,
    /// Relative slack before a measured ratio rounds up to the next integer.
    #[arg(long, default_value_t = DEFAULT_RATIO_TOLERANCE)]
    ratio_tolerance: f64,
}

#[derive(Args)]
struct LinkIndexArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct JoinArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    index: PathBuf,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct LsArgs {
    file: PathBuf,
}

#[derive(Args)]
struct GenFixtureArgs {
    #[arg(long)]
    out: PathBuf,
    /// Full fixture spec as JSON; other flags are ignored when given.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Approximate intact record count.
    #[arg(long, default_value_t = 1000)]
    records: usize,
    #[arg(long)]
    files: Option<usize>,
    #[arg(long)]
    corrupt: Option<usize>,
    /// Write uncompressed .warc files.
    #[arg(long)]
    plain: bool,
}

#[derive(Args)]
struct ConfigDumpArgs {
    #[command(flatten)]
    common: Overrides,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace(['\n', '\r'], " ");
            eprintln!("warcflow: error: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Produce(a) => produce(a),
        Command::Consume(a) => consume(a),
        Command::Run(a) => run(a),
        Command::Profile(a) => profile(a),
        Command::LinkIndex(a) => link_index(a),
        Command::Join(a) => join(a),
        Command::Ls(a) => ls(a),
        Command::GenFixture(a) => fixture(a),
        Command::ConfigDump(a) => {
            let config = a.common.load()?;
            config.validate()?;
            println!("{}", config.dump());
            Ok(())
        }
    }
}

fn source_for(index: Option<&Path>) -> Result<Source> {
    Ok(match index {
        Some(path) => Source::Pairs(Arc::new(
            UriIndex::read_file(path).with_context(|| format!("reading index {}", path.display()))?,
        )),
        None => Source::Records,
    })
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn produce(a: ProduceArgs) -> Result<()> {
    let mut config = a.common.load()?;
    if let Some(endpoint) = a.endpoint {
        config.endpoint = endpoint;
    }
    config.validate()?;
    if a.workers == 0 || a.worker_id >= a.workers {
        bail!("worker id {} out of range for {} workers", a.worker_id, a.workers);
    }
    let files = read_manifest(&a.manifest)?;
    let shard = assign_shards(&sized_files(&files), a.workers).files_for(a.worker_id);
    let mut opts = ProducerOptions::from_config(&config, format!("worker-{}", a.worker_id));
    opts.source = source_for(a.index.as_deref())?;
    let stats = run_producer(&config, &shard, opts)?;
    if let Some(path) = &a.stats {
        write_json(path, &stats)?;
    }
    println!("{}", serde_json::to_string_pretty(&stats)?);
    Ok(())
}

fn consume(a: ConsumeArgs) -> Result<()> {
    let mut config = a.common.load()?;
    if let Some(listen) = a.listen {
        config.endpoint = listen;
    }
    if let Some(n) = a.producers {
        config.producers = n;
    }
    if let Some(mode) = a.mode {
        config.mode = mode;
    }
    if let Some(out) = a.out {
        config.out_dir = out;
    }
    config.validate()?;
    let listener = bind(config.endpoint.as_str())?;
    log::info!("listening on {}", listener.local_addr()?);
    let mut model = StubModel::new(config.threshold);
    let stats = serve(listener, &ConsumerOptions::from_config(&config), &mut model)?;
    report_consumer(&stats)
}

fn report_consumer(stats: &ConsumerStats) -> Result<()> {
    eprintln!(
        "consumed {} samples from {} producers, {} results, {} connection errors",
        stats.samples_processed, stats.producers_ended, stats.results_written, stats.connection_errors
    );
    if stats.connection_errors > 0 {
        bail!("{} producer connections failed", stats.connection_errors);
    }
    Ok(())
}

fn run(a: RunArgs) -> Result<()> {
    let mut config = a.common.load()?;
    if let Some(n) = a.producers {
        config.producers = n;
    }
    if let Some(mode) = a.mode {
        config.mode = mode;
    }
    if let Some(out) = a.out {
        config.out_dir = out;
    }
    config.validate()?;
    let files = read_manifest(&a.manifest)?;
    let shards = assign_shards(&sized_files(&files), config.producers);
    let source = source_for(a.index.as_deref())?;

    let listener = bind("127.0.0.1:0")?;
    config.endpoint = listener.local_addr()?.to_string();
    let consumer_opts = ConsumerOptions::from_config(&config);
    let config = &config;

    let (consumer, producers) = std::thread::scope(|scope| {
        let consumer = scope.spawn(|| {
            let mut model = StubModel::new(config.threshold);
            serve(listener, &consumer_opts, &mut model)
        });
        let workers: Vec<_> = (0..config.producers)
            .map(|w| {
                let mut opts = ProducerOptions::from_config(config, format!("worker-{w}"));
                opts.source = source.clone();
                let shard = shards.files_for(w);
                scope.spawn(move || run_producer(config, &shard, opts))
            })
            .collect();
        let producers: Vec<_> = workers.into_iter().map(|h| h.join().expect("producer thread")).collect();
        (consumer.join().expect("consumer thread"), producers)
    });

    let mut failure = None;
    for (w, result) in producers.into_iter().enumerate() {
        match result {
            Ok(stats) => write_json(&config.out_dir.join(format!("producer-{w}.json")), &stats)?,
            Err(e) => failure = failure.or(Some(anyhow::Error::new(e).context(format!("worker-{w}")))),
        }
    }
    let stats = consumer?;
    if let Some(e) = failure {
        return Err(e);
    }
    report_consumer(&stats)
}

fn profile(a: ProfileArgs) -> Result<()> {
    let mut producers: Vec<ProducerStats> = Vec::new();
    for entry in glob::glob(&a.producer_stats).context("bad producer stats pattern")? {
        let path = entry?;
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        producers.push(serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?);
    }
    let text = std::fs::read_to_string(&a.consumer_stats)
        .with_context(|| format!("reading {}", a.consumer_stats.display()))?;
    let consumer: ConsumerStats =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", a.consumer_stats.display()))?;
    let report = measure_rates(&producers, &consumer, a.ratio_tolerance)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn link_index(a: LinkIndexArgs) -> Result<()> {
    let files = read_manifest(&a.manifest)?;
    let index = build_uri_index(&files)?;
    index.write_file(&a.out)?;
    eprintln!("indexed {} image URIs", index.len());
    Ok(())
}

fn join(a: JoinArgs) -> Result<()> {
    let files = read_manifest(&a.manifest)?;
    let index = Arc::new(UriIndex::read_file(&a.index)?);
    let mut out: Box<dyn Write> = match &a.out {
        Some(path) => Box::new(std::io::BufWriter::new(
            std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?,
        )),
        None => Box::new(std::io::BufWriter::new(std::io::stdout().lock())),
    };
    let mut joiner = join_pairs(&files, index);
    for pair in joiner.by_ref() {
        let pair = pair?;
        let line = serde_json::json!({
            "page_id": pair.page.record_id(),
            "image_id": pair.image.record_id(),
            "link_uri": pair.link_uri,
        });
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    let stats = joiner.stats();
    eprintln!(
        "{} pages, {} links, {} pairs, {} unresolved",
        stats.pages, stats.links, stats.pairs, stats.miss_count
    );
    Ok(())
}

fn ls(a: LsArgs) -> Result<()> {
    let mut reader = iterate_records(&a.file)?;
    let stdout = std::io::stdout();
    let mut out = std::io::BufWriter::new(stdout.lock());
    for record in reader.by_ref() {
        let mime = match record.warc_type() {
            WarcType::Response => extract_http_payload(&record).map(|p| p.mime_type).ok(),
            _ => record.header("Content-Type").map(str::to_string),
        };
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            record.source().record_index,
            record.warc_type().as_str(),
            record.target_uri().unwrap_or("-"),
            record.content_length(),
            mime.as_deref().unwrap_or("-"),
        )?;
    }
    out.flush()?;
    if reader.skipped() > 0 {
        eprintln!("skipped {} unreadable records", reader.skipped());
    }
    Ok(())
}

fn fixture(a: GenFixtureArgs) -> Result<()> {
    let spec = match &a.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => {
            let mut spec = FixtureSpec::with_total(a.records, a.seed);
            if let Some(files) = a.files {
                spec.files = files;
            }
            if let Some(corrupt) = a.corrupt {
                spec.corrupt = corrupt;
            }
            spec.compress = !a.plain;
            spec
        }
    };
    let fixture = gen_fixture(&spec, &a.out)?;
    eprintln!(
        "wrote {} files, {} records, {} pairs to {}",
        fixture.files.len(),
        fixture.truth.records.len(),
        fixture.truth.pairs.len(),
        fixture.dir.display()
    );
    Ok(())
}
