//! Sentence embeddings behind a persistent cache, plus the word-vector table
//! used by the overlap fallback.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, OnceLock, RwLock};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

use crate::geometry::{EmbedVector, GeometryError};
use crate::provider::{
    sha256_hex, CallCounter, CallCounts, ProviderError, RateLimiter, RetryPolicy,
};

/// Dimension of the word vectors used for the overlap fallback.
pub const WORD_VECTOR_DIM: usize = 300;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("text at position {0} is empty after normalization")]
    EmptyText(usize),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("provider returned {got} vectors for {expected} texts")]
    CountMismatch { expected: usize, got: usize },
    #[error("embedding dimension changed within a run: {expected} then {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid embedding: {0}")]
    Invalid(#[from] GeometryError),
    #[error("cache I/O on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// NFC, trimmed, with internal whitespace runs collapsed to one space.
pub fn normalize_text(text: &str) -> String {
    let nfc: String = text.nfc().collect();
    nfc.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Content hash of an already-normalized text.
pub fn text_hash(normalized: &str) -> String {
    sha256_hex(normalized)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceEmbedding {
    pub text_hash: String,
    pub model_id: String,
    pub vector: Vec<f32>,
}

impl SentenceEmbedding {
    pub fn embed_vector(&self) -> Result<EmbedVector, GeometryError> {
        EmbedVector::from_f32(&self.vector)
    }
}

/// Something that turns normalized texts into vectors.
pub trait EmbeddingProvider: Send + Sync {
    fn model_id(&self) -> &str;

    /// Whether calls leave the process.
    fn is_network(&self) -> bool;

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, ProviderError>;
}

fn encode_vector(v: &[f32]) -> String {
    let bytes: Vec<u8> = v.iter().flat_map(|x| x.to_le_bytes()).collect();
    B64.encode(bytes)
}

fn decode_vector(s: &str) -> Option<Vec<f32>> {
    let bytes = B64.decode(s.trim()).ok()?;
    if bytes.len() % 4 != 0 {
        return None;
    }
    Some(
        bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect(),
    )
}

/// One `text_hash<TAB>model_id<TAB>base64(f32 LE)` line.
pub fn format_record(text_hash: &str, model_id: &str, vector: &[f32]) -> String {
    format!("{text_hash}\t{model_id}\t{}", encode_vector(vector))
}

fn parse_record(line: &str) -> Option<SentenceEmbedding> {
    let mut parts = line.splitn(3, '\t');
    let text_hash = parts.next()?.to_owned();
    let model_id = parts.next()?.to_owned();
    let vector = decode_vector(parts.next()?)?;
    if text_hash.is_empty() || model_id.is_empty() || vector.is_empty() {
        return None;
    }
    Some(SentenceEmbedding {
        text_hash,
        model_id,
        vector,
    })
}

fn read_records(path: &Path) -> Result<(Vec<SentenceEmbedding>, usize), EmbeddingError> {
    let io = |source| EmbeddingError::Io {
        path: path.to_owned(),
        source,
    };
    let file = File::open(path).map_err(io)?;
    let mut records = Vec::new();
    let mut corrupt = 0;
    for line in BufReader::new(file).lines() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_record(&line) {
            Some(r) => records.push(r),
            None => corrupt += 1,
        }
    }
    if corrupt > 0 {
        log::warn!(
            "{}: skipped {corrupt} corrupt embedding records",
            path.display()
        );
    }
    Ok((records, corrupt))
}

/// Append-only embedding store keyed by `(model_id, text_hash)`.
#[derive(Debug, Default)]
pub struct EmbeddingCache {
    path: Option<PathBuf>,
    entries: RwLock<HashMap<(String, String), Vec<f32>>>,
    writer: Mutex<Option<BufWriter<File>>>,
    corrupt_lines: usize,
}

impl EmbeddingCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (or creates) the cache file, loading every readable record.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, EmbeddingError> {
        let path = path.into();
        let mut entries = HashMap::new();
        let mut corrupt_lines = 0;
        if path.exists() {
            let (records, corrupt) = read_records(&path)?;
            corrupt_lines = corrupt;
            for r in records {
                entries.entry((r.model_id, r.text_hash)).or_insert(r.vector);
            }
        } else if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|source| EmbeddingError::Io {
                path: dir.to_owned(),
                source,
            })?;
        }
        Ok(Self {
            path: Some(path),
            entries: RwLock::new(entries),
            writer: Mutex::new(None),
            corrupt_lines,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn corrupt_lines(&self) -> usize {
        self.corrupt_lines
    }

    pub fn get(&self, model_id: &str, text_hash: &str) -> Option<Vec<f32>> {
        self.entries
            .read()
            .expect("cache lock")
            .get(&(model_id.to_owned(), text_hash.to_owned()))
            .cloned()
    }

    pub fn insert(&self, record: &SentenceEmbedding) -> Result<(), EmbeddingError> {
        let key = (record.model_id.clone(), record.text_hash.clone());
        {
            let mut entries = self.entries.write().expect("cache lock");
            if entries.contains_key(&key) {
                return Ok(());
            }
            entries.insert(key, record.vector.clone());
        }
        let Some(path) = &self.path else {
            return Ok(());
        };
        let io = |source| EmbeddingError::Io {
            path: path.clone(),
            source,
        };
        let mut writer = self.writer.lock().expect("cache writer lock");
        if writer.is_none() {
            let file = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(io)?;
            *writer = Some(BufWriter::new(file));
        }
        let w = writer.as_mut().expect("writer initialised");
        writeln!(
            w,
            "{}",
            format_record(&record.text_hash, &record.model_id, &record.vector)
        )
        .map_err(io)?;
        w.flush().map_err(io)
    }
}

/// Replays vectors from a record file in the cache format.
pub struct FixtureEmbeddingProvider {
    model_id: String,
    vectors: HashMap<String, Vec<f32>>,
}

impl FixtureEmbeddingProvider {
    /// Loads fixtures for `model_id`, or for the only model present when `None`.
    pub fn load(path: &Path, model_id: Option<&str>) -> Result<Self, EmbeddingError> {
        let (records, _) = read_records(path)?;
        let model_id = match model_id {
            Some(m) => m.to_owned(),
            None => {
                let mut models: Vec<&str> = records.iter().map(|r| r.model_id.as_str()).collect();
                models.sort_unstable();
                models.dedup();
                match models.as_slice() {
                    [only] => (*only).to_owned(),
                    [] => {
                        return Err(ProviderError::Config(format!(
                            "{} holds no embedding records",
                            path.display()
                        ))
                        .into())
                    }
                    many => {
                        return Err(ProviderError::Config(format!(
                            "{} mixes models {many:?}; set the embedding model explicitly",
                            path.display()
                        ))
                        .into())
                    }
                }
            }
        };
        let vectors = records
            .into_iter()
            .filter(|r| r.model_id == model_id)
            .map(|r| (r.text_hash, r.vector))
            .collect();
        Ok(Self { model_id, vectors })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

impl EmbeddingProvider for FixtureEmbeddingProvider {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn is_network(&self) -> bool {
        false
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, ProviderError> {
        texts
            .iter()
            .map(|t| {
                let h = text_hash(t);
                self.vectors
                    .get(&h)
                    .cloned()
                    .ok_or_else(|| ProviderError::FixtureMiss(format!("embedding of {t:?} ({h})")))
            })
            .collect()
    }
}

/// Deterministic signed feature hashing of lowercase word tokens, L2-normalized.
/// Runs locally; useful for offline smoke runs and for building fixtures.
pub struct HashingEmbedder {
    model_id: String,
    dim: usize,
}

impl HashingEmbedder {
    pub fn new(dim: usize) -> Self {
        Self {
            model_id: format!("hashing-bow-{dim}"),
            dim: dim.max(2),
        }
    }

    pub fn embed_one(&self, text: &str) -> Vec<f32> {
        use sha2::{Digest, Sha256};
        let lower = text.to_lowercase();
        let mut words: Vec<&str> = lower
            .split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
            .collect();
        if words.is_empty() {
            words.push(&lower);
        }
        let mut v = vec![0.0f64; self.dim];
        for w in words {
            let d = Sha256::digest(w.as_bytes());
            let h = u64::from_le_bytes(d[..8].try_into().expect("8 bytes"));
            let sign = if d[8] & 1 == 0 { 1.0 } else { -1.0 };
            v[(h % self.dim as u64) as usize] += sign;
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter().map(|x| (x / n) as f32).collect()
    }
}

impl EmbeddingProvider for HashingEmbedder {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn is_network(&self) -> bool {
        false
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, ProviderError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

/// Cache-first access to one embedding provider.
pub struct Embedder {
    provider: Box<dyn EmbeddingProvider>,
    cache: EmbeddingCache,
    retry: RetryPolicy,
    limiter: Option<RateLimiter>,
    batch_size: usize,
    dimension: OnceLock<usize>,
    calls: CallCounter,
}

impl Embedder {
    pub fn new(provider: Box<dyn EmbeddingProvider>, cache: EmbeddingCache) -> Self {
        Self {
            provider,
            cache,
            retry: RetryPolicy::default(),
            limiter: None,
            batch_size: 64,
            dimension: OnceLock::new(),
            calls: CallCounter::default(),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_rate_limit(mut self, requests_per_minute: u32) -> Self {
        self.limiter = Some(RateLimiter::per_minute(requests_per_minute));
        self
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size.max(1);
        self
    }

    pub fn model_id(&self) -> &str {
        self.provider.model_id()
    }

    pub fn is_network(&self) -> bool {
        self.provider.is_network()
    }

    pub fn calls(&self) -> CallCounts {
        self.calls.snapshot()
    }

    fn check_dim(&self, v: &[f32]) -> Result<(), EmbeddingError> {
        let expected = *self.dimension.get_or_init(|| v.len());
        if v.len() != expected {
            return Err(EmbeddingError::DimensionMismatch {
                expected,
                found: v.len(),
            });
        }
        Ok(())
    }

    /// Embeds `texts` in order, serving repeats and known texts from the cache.
    pub fn embed_batch<S: AsRef<str>>(
        &self,
        texts: &[S],
    ) -> Result<Vec<SentenceEmbedding>, EmbeddingError> {
        let model_id = self.provider.model_id().to_owned();
        let mut normalized = Vec::with_capacity(texts.len());
        for (i, t) in texts.iter().enumerate() {
            let n = normalize_text(t.as_ref());
            if n.is_empty() {
                return Err(EmbeddingError::EmptyText(i));
            }
            normalized.push(n);
        }
        let hashes: Vec<String> = normalized.iter().map(|n| text_hash(n)).collect();

        // Distinct misses, in first-seen order.
        let mut misses: BTreeMap<&str, usize> = BTreeMap::new();
        let mut miss_order: Vec<usize> = Vec::new();
        for (i, h) in hashes.iter().enumerate() {
            if self.cache.get(&model_id, h).is_none() && !misses.contains_key(h.as_str()) {
                misses.insert(h, i);
                miss_order.push(i);
            }
        }

        for chunk in miss_order.chunks(self.batch_size) {
            let batch: Vec<String> = chunk.iter().map(|&i| normalized[i].clone()).collect();
            let (result, _) = self.retry.run(|| {
                if let Some(l) = &self.limiter {
                    l.acquire();
                }
                self.calls.record(self.provider.is_network());
                self.provider.embed(&batch)
            });
            let vectors = result?;
            if vectors.len() != batch.len() {
                return Err(EmbeddingError::CountMismatch {
                    expected: batch.len(),
                    got: vectors.len(),
                });
            }
            for (&i, vector) in chunk.iter().zip(vectors) {
                self.check_dim(&vector)?;
                EmbedVector::from_f32(&vector)?;
                self.cache.insert(&SentenceEmbedding {
                    text_hash: hashes[i].clone(),
                    model_id: model_id.clone(),
                    vector,
                })?;
            }
        }

        hashes
            .into_iter()
            .map(|h| {
                let vector = self
                    .cache
                    .get(&model_id, &h)
                    .expect("every text is cached after the provider pass");
                self.check_dim(&vector)?;
                Ok(SentenceEmbedding {
                    text_hash: h,
                    model_id: model_id.clone(),
                    vector,
                })
            })
            .collect()
    }
}

/// Lowercase word to vector lookup table.
#[derive(Debug, Clone, Default)]
pub struct WordVectorTable {
    entries: HashMap<String, EmbedVector>,
    dim: usize,
    source_path: String,
    skipped_lines: usize,
}

impl WordVectorTable {
    /// Loads a whitespace-separated text table of 300-dimensional vectors.
    pub fn load(path: &Path) -> std::io::Result<Self> {
        Self::load_with_dim(path, WORD_VECTOR_DIM)
    }

    /// Lines whose arity or numbers do not parse are skipped and counted.
    pub fn load_with_dim(path: &Path, dim: usize) -> std::io::Result<Self> {
        let file = File::open(path)?;
        let mut table = Self {
            dim,
            source_path: path.display().to_string(),
            ..Self::default()
        };
        for line in BufReader::new(file).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let word = parts.next().unwrap_or_default().to_lowercase();
            let values: Option<Vec<f64>> = parts.map(|p| p.parse().ok()).collect();
            match values
                .filter(|v| v.len() == dim)
                .and_then(|v| EmbedVector::new(v).ok())
            {
                Some(v) => {
                    table.entries.entry(word).or_insert(v);
                }
                None => table.skipped_lines += 1,
            }
        }
        if table.skipped_lines > 0 {
            log::warn!(
                "{}: skipped {} malformed word-vector lines",
                table.source_path,
                table.skipped_lines
            );
        }
        Ok(table)
    }

    pub fn from_entries<I, S>(dim: usize, entries: I) -> Result<Self, GeometryError>
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: AsRef<str>,
    {
        let mut table = Self {
            dim,
            source_path: "<memory>".into(),
            ..Self::default()
        };
        for (w, v) in entries {
            if v.len() != dim {
                return Err(GeometryError::DimensionMismatch {
                    expected: dim,
                    found: v.len(),
                });
            }
            table
                .entries
                .entry(w.as_ref().to_lowercase())
                .or_insert(EmbedVector::new(v)?);
        }
        Ok(table)
    }

    /// Case-insensitive lookup; `None` means out of vocabulary.
    pub fn get(&self, token: &str) -> Option<&EmbedVector> {
        self.entries.get(&token.to_lowercase())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn source_path(&self) -> &str {
        &self.source_path
    }

    pub fn skipped_lines(&self) -> usize {
        self.skipped_lines
    }
}

/// Looks up `token`; `None` signals out-of-vocabulary.
pub fn word_vector<'a>(token: &str, table: &'a WordVectorTable) -> Option<&'a EmbedVector> {
    table.get(token)
}
