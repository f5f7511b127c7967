//! Subcommand execution: build providers from a [`RunConfig`], load data,
//! run one experiment and write its artifacts.
//!
//! Every run directory holds `manifest.json` plus line-delimited per-item
//! files and summary CSVs. `report` rebuilds the summaries from those files
//! alone.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ChatMode, ConfigError, EmbeddingMode, RunConfig};
use crate::corpus::{
    load_figqa, load_munch, CorpusError, FigQaGroup, Genre, LoadReport, MunchRecord, RejectReason,
};
use crate::embeddings::{
    Embedder, EmbeddingCache, EmbeddingError, EmbeddingProvider, FixtureEmbeddingProvider,
    HashingEmbedder, WordVectorTable,
};
use crate::experiments::{
    detection, imagination, multichoice, spatial, Concurrency, Exclusion, RunOutput,
};
use crate::gateway::{
    ChatProvider, FixtureChatProvider, Gateway, GenerationRecord, ParseOptions, StatusCounts,
    TemplateError, TemplateRegistry,
};
use crate::provider::{CallCounts, ProviderError, RetryPolicy};
use crate::transforms::{
    generate_variants, Lexicon, ShuffleVariant, Skip, SkipReason, VariantKind, VariantOutcome,
};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path} line {line}: {source}")]
    Json {
        path: PathBuf,
        line: usize,
        source: serde_json::Error,
    },
    #[error("{0}")]
    Missing(String),
    #[error("cannot report on `{0}` runs")]
    NotReportable(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_owned(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Spatial,
    Multichoice,
    Imagine {
        /// Empty means every genre.
        genres: Vec<Genre>,
        novel_only: bool,
    },
    ShuffleGen {
        /// Empty means the config's kinds.
        kinds: Vec<VariantKind>,
    },
    Detect {
        kinds: Vec<VariantKind>,
        /// Output directory of an earlier `shuffle-gen` run.
        variants: Option<PathBuf>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Spatial => "spatial",
            Command::Multichoice => "multichoice",
            Command::Imagine { .. } => "imagine",
            Command::ShuffleGen { .. } => "shuffle-gen",
            Command::Detect { .. } => "detect",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub path: String,
    pub rows: usize,
    pub records: usize,
    pub rejects: BTreeMap<RejectReason, usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Filters {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub genres: Vec<Genre>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub novel_only: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub kinds: Vec<VariantKind>,
}

/// Everything needed to reproduce or re-aggregate a run. Holds no
/// timestamps or absolute host paths beyond what the config itself names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub command: String,
    pub config_hash: String,
    pub config: RunConfig,
    pub seeds: BTreeMap<String, u64>,
    #[serde(default)]
    pub filters: Filters,
    pub chat_model: Option<String>,
    pub embedding_model: Option<String>,
    pub chat_calls: CallCounts,
    pub embedding_calls: CallCounts,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generation_status: Option<StatusCounts>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<DatasetStats>,
    pub items_in: usize,
    pub scored: usize,
    pub exclusions: BTreeMap<String, usize>,
    pub outputs: Vec<String>,
}

impl Manifest {
    fn new(command: &str, config: &RunConfig) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION").to_owned(),
            command: command.to_owned(),
            config_hash: config.content_hash(),
            config: config.clone(),
            seeds: BTreeMap::new(),
            filters: Filters::default(),
            chat_model: None,
            embedding_model: None,
            chat_calls: CallCounts::default(),
            embedding_calls: CallCounts::default(),
            generation_status: None,
            dataset: None,
            items_in: 0,
            scored: 0,
            exclusions: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    /// Total provider calls that left the process.
    pub fn network_calls(&self) -> u64 {
        self.chat_calls.network + self.embedding_calls.network
    }

    pub fn load(dir: &Path) -> Result<Self, RunError> {
        let path = dir.join("manifest.json");
        let src = fs::read_to_string(&path).map_err(io_err(&path))?;
        serde_json::from_str(&src).map_err(|source| RunError::Json {
            path,
            line: 0,
            source,
        })
    }
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), RunError> {
    let mut buf = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut buf, r).expect("records serialize");
        buf.push(b'\n');
    }
    fs::write(path, buf).map_err(io_err(path))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, RunError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|source| RunError::Json {
                path: path.to_owned(),
                line: n + 1,
                source,
            })?,
        );
    }
    Ok(out)
}

fn write_text(path: &Path, text: &str) -> Result<(), RunError> {
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(text.as_bytes()).map_err(io_err(path))
}

fn required<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path, RunError> {
    p.as_deref()
        .ok_or_else(|| RunError::Missing(format!("config does not name {what}")))
}

fn must_exist(path: PathBuf) -> Result<PathBuf, RunError> {
    if path.exists() {
        Ok(path)
    } else {
        Err(RunError::Missing(format!(
            "{} does not exist",
            path.display()
        )))
    }
}

pub fn build_gateway(config: &RunConfig) -> Result<Gateway, RunError> {
    let chat = &config.chat;
    let provider: Box<dyn ChatProvider> = match chat.mode {
        ChatMode::Fixture => {
            let path = must_exist(
                config.resolve(required(&chat.fixture, "a chat fixture ([chat] fixture)")?),
            )?;
            Box::new(FixtureChatProvider::load(&path)?)
        }
        ChatMode::Live => live_chat(config)?,
    };
    gateway_for(provider, config)
}

/// Wraps `provider` with the templates, retry policy and parse options the
/// config asks for.
pub fn gateway_for(
    provider: Box<dyn ChatProvider>,
    config: &RunConfig,
) -> Result<Gateway, RunError> {
    let templates = match &config.data.templates {
        Some(dir) => TemplateRegistry::with_overrides(&must_exist(config.resolve(dir))?)?,
        None => TemplateRegistry::defaults(),
    };
    let chat = &config.chat;
    let mut gw = Gateway::new(provider, templates)
        .with_retry(RetryPolicy {
            max_attempts: chat.max_attempts.max(1),
            ..RetryPolicy::default()
        })
        .with_parse_options(ParseOptions {
            word_count: config.imagination.word_count,
            n_options: 4,
        });
    if let Some(rpm) = chat.requests_per_minute {
        gw = gw.with_rate_limit(rpm);
    }
    Ok(gw)
}

#[cfg(feature = "live")]
fn live_chat(config: &RunConfig) -> Result<Box<dyn ChatProvider>, RunError> {
    let chat = &config.chat;
    let endpoint = chat.endpoint.as_deref().unwrap_or_default();
    let model = chat.model.as_deref().unwrap_or_default();
    let http = Box::new(crate::live::HttpChatProvider::new(
        endpoint,
        model,
        &chat.auth_env,
    )?);
    Ok(match &chat.record_to {
        Some(p) => {
            let path = config.resolve(p);
            Box::new(
                crate::gateway::RecordingChatProvider::new(http, &path).map_err(io_err(&path))?,
            )
        }
        None => http,
    })
}

#[cfg(not(feature = "live"))]
fn live_chat(_config: &RunConfig) -> Result<Box<dyn ChatProvider>, RunError> {
    Err(ProviderError::Config("built without the `live` feature".into()).into())
}

#[cfg(feature = "live")]
fn live_embedding(config: &RunConfig) -> Result<Box<dyn EmbeddingProvider>, RunError> {
    let e = &config.embedding;
    Ok(Box::new(crate::live::HttpEmbeddingProvider::new(
        e.endpoint.as_deref().unwrap_or_default(),
        e.model.as_deref().unwrap_or_default(),
        &e.auth_env,
    )?))
}

#[cfg(not(feature = "live"))]
fn live_embedding(_config: &RunConfig) -> Result<Box<dyn EmbeddingProvider>, RunError> {
    Err(ProviderError::Config("built without the `live` feature".into()).into())
}

pub fn build_embedder(config: &RunConfig) -> Result<Embedder, RunError> {
    let e = &config.embedding;
    let provider: Box<dyn EmbeddingProvider> = match e.mode {
        EmbeddingMode::Fixture => {
            let path = must_exist(config.resolve(required(
                &e.fixture,
                "an embedding fixture ([embedding] fixture)",
            )?))?;
            Box::new(FixtureEmbeddingProvider::load(&path, e.model.as_deref())?)
        }
        EmbeddingMode::Hashing => Box::new(HashingEmbedder::new(e.hashing_dim)),
        EmbeddingMode::Live => live_embedding(config)?,
    };
    let cache = match &e.cache {
        Some(p) => EmbeddingCache::open(config.resolve(p))?,
        None => EmbeddingCache::in_memory(),
    };
    let mut embedder = Embedder::new(provider, cache).with_batch_size(e.batch_size);
    if let Some(rpm) = e.requests_per_minute {
        embedder = embedder.with_rate_limit(rpm);
    }
    Ok(embedder)
}

fn dataset_stats<T>(path: &Path, report: &LoadReport<T>) -> DatasetStats {
    let mut rejects = BTreeMap::new();
    for r in &report.rejects {
        *rejects.entry(r.reason).or_insert(0) += 1;
    }
    DatasetStats {
        path: path.display().to_string(),
        rows: report.rows,
        records: report.records.len(),
        rejects,
    }
}

fn load_groups(
    config: &RunConfig,
    out_dir: &Path,
    manifest: &mut Manifest,
) -> Result<Vec<FigQaGroup>, RunError> {
    let rel = required(&config.data.figqa, "a Fig-QA file ([data] figqa)")?;
    let report = load_figqa(&must_exist(config.resolve(rel))?)?;
    write_jsonl(&out_dir.join("rejects.jsonl"), &report.rejects)?;
    manifest.dataset = Some(dataset_stats(rel, &report));
    Ok(report.records)
}

fn load_records(
    config: &RunConfig,
    out_dir: &Path,
    manifest: &mut Manifest,
) -> Result<Vec<MunchRecord>, RunError> {
    let rel = required(&config.data.munch, "a MUNCH file ([data] munch)")?;
    let report = load_munch(&must_exist(config.resolve(rel))?)?;
    write_jsonl(&out_dir.join("rejects.jsonl"), &report.rejects)?;
    manifest.dataset = Some(dataset_stats(rel, &report));
    Ok(report.records)
}

fn load_lexicon(config: &RunConfig) -> Result<Option<Lexicon>, RunError> {
    match &config.data.lexicon {
        Some(p) => {
            let path = must_exist(config.resolve(p))?;
            Ok(Some(Lexicon::load(&path).map_err(io_err(&path))?))
        }
        None => {
            log::warn!("no lexicon configured; POS variants will be skipped");
            Ok(None)
        }
    }
}

fn record_counts(manifest: &mut Manifest, items: usize, exclusions: &[Exclusion]) {
    manifest.items_in = items + exclusions.len();
    manifest.scored = items;
    manifest.exclusions = crate::experiments::exclusion_counts(exclusions)
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
}

fn write_run<I: Serialize>(
    out_dir: &Path,
    out: &RunOutput<I>,
    manifest: &mut Manifest,
) -> Result<(), RunError> {
    write_jsonl(&out_dir.join("items.jsonl"), &out.items)?;
    write_jsonl(&out_dir.join("exclusions.jsonl"), &out.exclusions)?;
    write_jsonl::<GenerationRecord>(&out_dir.join("generations.jsonl"), &out.generations)?;
    record_counts(manifest, out.items.len(), &out.exclusions);
    Ok(())
}

/// Summary CSV files for a finished run, keyed by file name.
fn summaries(manifest: &Manifest, dir: &Path) -> Result<Vec<(&'static str, String)>, RunError> {
    let model = manifest.chat_model.clone().unwrap_or_default();
    let exclusions = || read_jsonl::<Exclusion>(&dir.join("exclusions.jsonl"));
    Ok(match manifest.command.as_str() {
        "spatial" => {
            let items: Vec<spatial::SpatialItem> = read_jsonl(&dir.join("items.jsonl"))?;
            vec![(
                "summary.csv",
                spatial::summarize(&model, &items, &exclusions()?).to_csv(),
            )]
        }
        "multichoice" => {
            let items: Vec<multichoice::MultichoiceItem> = read_jsonl(&dir.join("items.jsonl"))?;
            vec![(
                "summary.csv",
                multichoice::summarize(&model, &items, &exclusions()?).to_csv(),
            )]
        }
        "imagine" => {
            let items: Vec<imagination::OverlapResult> = read_jsonl(&dir.join("items.jsonl"))?;
            let s = imagination::summarize(
                &model,
                &items,
                &exclusions()?,
                manifest.config.imagination.novelty_threshold,
            );
            vec![
                ("summary.csv", s.to_csv()),
                ("histogram.csv", s.histogram_csv()),
            ]
        }
        "detect" => {
            let items: Vec<detection::DetectionOutcome> = read_jsonl(&dir.join("items.jsonl"))?;
            vec![(
                "summary.csv",
                detection::summarize(&model, &items, &exclusions()?).to_csv(),
            )]
        }
        "shuffle-gen" => {
            let variants: Vec<ShuffleVariant> = read_jsonl(&dir.join("variants.jsonl"))?;
            let skips: Vec<Skip> = read_jsonl(&dir.join("skips.jsonl"))?;
            vec![("summary.csv", variant_summary_csv(&variants, &skips))]
        }
        other => return Err(RunError::NotReportable(other.to_owned())),
    })
}

/// Emitted and skipped counts per variant kind.
pub fn variant_summary_csv(variants: &[ShuffleVariant], skips: &[Skip]) -> String {
    let reasons = [
        SkipReason::LexiconMiss,
        SkipReason::NoCrossPosRelative,
        SkipReason::NoValidSlot,
    ];
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let mut header = vec!["kind".to_owned(), "emitted".to_owned()];
    header.extend(reasons.iter().map(|r| format!("skipped_{r}")));
    w.write_record(&header).expect("in-memory write");
    for kind in VariantKind::ALL {
        let mut row = vec![
            kind.to_string(),
            variants
                .iter()
                .filter(|v| v.kind == kind)
                .count()
                .to_string(),
        ];
        for r in reasons {
            row.push(
                skips
                    .iter()
                    .filter(|s| s.kind == kind && s.reason == r)
                    .count()
                    .to_string(),
            );
        }
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

fn finish(out_dir: &Path, manifest: &mut Manifest) -> Result<(), RunError> {
    for (name, body) in summaries(manifest, out_dir)? {
        write_text(&out_dir.join(name), &body)?;
    }
    let mut outputs: Vec<String> = fs::read_dir(out_dir)
        .map_err(io_err(out_dir))?
        .filter_map(|e| e.ok()?.file_name().into_string().ok())
        .filter(|n| n != "manifest.json")
        .collect();
    outputs.sort();
    manifest.outputs = outputs;
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    write_text(&out_dir.join("manifest.json"), &json)
}

fn kinds_or_config(kinds: &[VariantKind], config: &RunConfig) -> Vec<VariantKind> {
    let mut k = if kinds.is_empty() {
        config.detection.kinds.clone()
    } else {
        kinds.to_vec()
    };
    k.sort();
    k.dedup();
    k
}

fn shuffle_outcomes(
    records: &[MunchRecord],
    kinds: &[VariantKind],
    seed: u64,
    lexicon: Option<&Lexicon>,
) -> Vec<VariantOutcome> {
    records
        .iter()
        .flat_map(|r| generate_variants(r, kinds, seed, lexicon))
        .collect()
}

fn split_outcomes(outcomes: &[VariantOutcome]) -> (Vec<ShuffleVariant>, Vec<Skip>) {
    let mut variants = Vec::new();
    let mut skips = Vec::new();
    for o in outcomes {
        match o {
            Ok(v) => variants.push(v.clone()),
            Err(s) => skips.push(s.clone()),
        }
    }
    (variants, skips)
}

/// Loads the variants of an earlier `shuffle-gen` run, restoring the
/// original record-then-kind order.
fn load_variants(dir: &Path, kinds: &[VariantKind]) -> Result<Vec<VariantOutcome>, RunError> {
    let variants: Vec<ShuffleVariant> = read_jsonl(&must_exist(dir.join("variants.jsonl"))?)?;
    let skips: Vec<Skip> = read_jsonl(&must_exist(dir.join("skips.jsonl"))?)?;
    let mut order: Vec<String> = Vec::new();
    for id in variants
        .iter()
        .map(|v| &v.source_id)
        .chain(skips.iter().map(|s| &s.source_id))
    {
        if !order.contains(id) {
            order.push(id.clone());
        }
    }
    let mut all: Vec<VariantOutcome> = variants
        .into_iter()
        .map(Ok)
        .chain(skips.into_iter().map(Err))
        .collect();
    all.retain(|o| kinds.contains(&o.as_ref().map_or_else(|s| s.kind, |v| v.kind)));
    all.sort_by_key(|o| {
        let (id, kind) = match o {
            Ok(v) => (&v.source_id, v.kind),
            Err(s) => (&s.source_id, s.kind),
        };
        (order.iter().position(|x| x == id), kind)
    });
    Ok(all)
}

/// Providers that replace the ones the config describes.
#[derive(Default)]
pub struct Providers {
    pub chat: Option<Box<dyn ChatProvider>>,
    pub embedder: Option<Embedder>,
}

impl Providers {
    fn gateway(&mut self, config: &RunConfig) -> Result<Gateway, RunError> {
        match self.chat.take() {
            Some(p) => gateway_for(p, config),
            None => build_gateway(config),
        }
    }

    fn embedder(&mut self, config: &RunConfig) -> Result<Embedder, RunError> {
        match self.embedder.take() {
            Some(e) => Ok(e),
            None => build_embedder(config),
        }
    }
}

/// Runs `command` and writes its artifacts to `out_dir`.
pub fn execute(
    command: &Command,
    config: &RunConfig,
    out_dir: &Path,
) -> Result<Manifest, RunError> {
    execute_with(command, config, out_dir, Providers::default())
}

/// Like [`execute`], with providers supplied by the caller.
pub fn execute_with(
    command: &Command,
    config: &RunConfig,
    out_dir: &Path,
    mut providers: Providers,
) -> Result<Manifest, RunError> {
    config.validate()?;
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut manifest = Manifest::new(command.name(), config);
    let concurrency = Concurrency(config.chat.max_concurrent);

    match command {
        Command::ShuffleGen { kinds } => {
            let kinds = kinds_or_config(kinds, config);
            let records = load_records(config, out_dir, &mut manifest)?;
            let lexicon = load_lexicon(config)?;
            let seed = config.seeds.shuffle();
            manifest.seeds.insert("shuffle".into(), seed);
            manifest.filters.kinds = kinds.clone();
            let (variants, skips) =
                split_outcomes(&shuffle_outcomes(&records, &kinds, seed, lexicon.as_ref()));
            write_jsonl(&out_dir.join("variants.jsonl"), &variants)?;
            write_jsonl(&out_dir.join("skips.jsonl"), &skips)?;
            manifest.items_in = variants.len() + skips.len();
            manifest.scored = variants.len();
            for s in &skips {
                *manifest
                    .exclusions
                    .entry(format!("skipped_{}", s.reason))
                    .or_insert(0) += 1;
            }
        }
        Command::Spatial => {
            let groups = load_groups(config, out_dir, &mut manifest)?;
            let gateway = providers.gateway(config)?;
            let embedder = providers.embedder(config)?;
            let out =
                spatial::run_spatial(&groups, &gateway, &embedder, config.geometry, concurrency);
            write_run(out_dir, &out, &mut manifest)?;
            manifest.embedding_model = Some(embedder.model_id().to_owned());
            manifest.embedding_calls = embedder.calls();
            note_gateway(&mut manifest, &gateway);
        }
        Command::Multichoice => {
            let groups = load_groups(config, out_dir, &mut manifest)?;
            let gateway = providers.gateway(config)?;
            let seed = config.seeds.multichoice();
            manifest.seeds.insert("multichoice".into(), seed);
            let out = multichoice::run_multichoice(&groups, &gateway, seed, concurrency);
            write_run(out_dir, &out, &mut manifest)?;
            note_gateway(&mut manifest, &gateway);
        }
        Command::Imagine { genres, novel_only } => {
            let mut records = load_records(config, out_dir, &mut manifest)?;
            let threshold = config.imagination.novelty_threshold;
            records.retain(|r| {
                (genres.is_empty() || genres.contains(&r.genre))
                    && (!novel_only || r.is_novel(threshold))
            });
            manifest.filters.genres = genres.clone();
            manifest.filters.novel_only = *novel_only;
            let rel = required(
                &config.data.word_vectors,
                "a word vector table ([data] word_vectors)",
            )?;
            let path = must_exist(config.resolve(rel))?;
            let table = WordVectorTable::load_with_dim(&path, config.data.word_vector_dim)
                .map_err(io_err(&path))?;
            let gateway = providers.gateway(config)?;
            let out = imagination::run_imagination(&records, &gateway, &table, concurrency);
            write_run(out_dir, &out, &mut manifest)?;
            note_gateway(&mut manifest, &gateway);
        }
        Command::Detect { kinds, variants } => {
            let kinds = kinds_or_config(kinds, config);
            manifest.filters.kinds = kinds.clone();
            let outcomes = match variants {
                Some(dir) => load_variants(dir, &kinds)?,
                None => {
                    let records = load_records(config, out_dir, &mut manifest)?;
                    let lexicon = load_lexicon(config)?;
                    let seed = config.seeds.shuffle();
                    manifest.seeds.insert("shuffle".into(), seed);
                    shuffle_outcomes(&records, &kinds, seed, lexicon.as_ref())
                }
            };
            let gateway = providers.gateway(config)?;
            let out = detection::run_shuffle_detection(&outcomes, &gateway, concurrency);
            write_run(out_dir, &out, &mut manifest)?;
            note_gateway(&mut manifest, &gateway);
        }
    }
    finish(out_dir, &mut manifest)?;
    log::info!(
        "{}: {} scored of {} items, {} network calls",
        command.name(),
        manifest.scored,
        manifest.items_in,
        manifest.network_calls()
    );
    Ok(manifest)
}

fn note_gateway(manifest: &mut Manifest, gateway: &Gateway) {
    manifest.chat_model = Some(gateway.model_id().to_owned());
    manifest.chat_calls = gateway.calls();
    manifest.generation_status = Some(gateway.status_counts());
}

/// Recomputes the summary CSVs of the run in `from` into `out_dir`, using
/// only its manifest and per-item files.
pub fn report(from: &Path, out_dir: &Path) -> Result<Manifest, RunError> {
    let source = Manifest::load(from)?;
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut manifest = source.clone();
    manifest.chat_calls = CallCounts::default();
    manifest.embedding_calls = CallCounts::default();
    manifest.generation_status = None;
    for (name, body) in summaries(&source, from)? {
        write_text(&out_dir.join(name), &body)?;
    }
    let mut outputs: Vec<String> = summaries(&source, from)?
        .into_iter()
        .map(|(n, _)| n.to_owned())
        .collect();
    outputs.sort();
    manifest.outputs = outputs;
    manifest.command = format!("report:{}", source.command);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    write_text(&out_dir.join("manifest.json"), &json)?;
    Ok(manifest)
}
