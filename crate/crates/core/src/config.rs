//! Run configuration: one TOML file, secrets only by environment variable name.
//!
//! Relative paths in the file are resolved against the file's directory.
//! The manifest echoes the config as written, so two machines running the
//! same checkout produce the same manifest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::GeometryConfig;
use crate::transforms::VariantKind;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parsing config {path}: {source}")]
    Parse {
        path: PathBuf,
        source: toml::de::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub figqa: Option<PathBuf>,
    pub munch: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub word_vectors: Option<PathBuf>,
    #[serde(default = "default_word_dim")]
    pub word_vector_dim: usize,
    /// Directory of `*.toml` templates overriding the bundled ones.
    pub templates: Option<PathBuf>,
}

fn default_word_dim() -> usize {
    crate::embeddings::WORD_VECTOR_DIM
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            figqa: None,
            munch: None,
            lexicon: None,
            word_vectors: None,
            word_vector_dim: default_word_dim(),
            templates: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChatMode {
    #[default]
    Fixture,
    Live,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChatConfig {
    #[serde(default)]
    pub mode: ChatMode,
    pub fixture: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    #[serde(default = "default_auth_env")]
    pub auth_env: String,
    /// Live mode only: append every exchange to this fixture file.
    pub record_to: Option<PathBuf>,
    #[serde(default = "default_concurrency")]
    pub max_concurrent: usize,
    pub requests_per_minute: Option<u32>,
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
}

impl Default for ChatConfig {
    fn default() -> Self {
        Self {
            mode: ChatMode::Fixture,
            fixture: None,
            endpoint: None,
            model: None,
            auth_env: default_auth_env(),
            record_to: None,
            max_concurrent: default_concurrency(),
            requests_per_minute: None,
            max_attempts: default_attempts(),
        }
    }
}

fn default_auth_env() -> String {
    "OPENAI_API_KEY".into()
}

fn default_concurrency() -> usize {
    4
}

fn default_attempts() -> u32 {
    5
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingMode {
    #[default]
    Fixture,
    Live,
    /// Local feature-hashing bag of words; no provider at all.
    Hashing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingConfig {
    #[serde(default)]
    pub mode: EmbeddingMode,
    pub fixture: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    #[serde(default = "default_auth_env")]
    pub auth_env: String,
    /// Persistent vector cache; in memory when unset.
    pub cache: Option<PathBuf>,
    #[serde(default = "default_hash_dim")]
    pub hashing_dim: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    pub requests_per_minute: Option<u32>,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            mode: EmbeddingMode::Fixture,
            fixture: None,
            endpoint: None,
            model: None,
            auth_env: default_auth_env(),
            cache: None,
            hashing_dim: default_hash_dim(),
            batch_size: default_batch(),
            requests_per_minute: None,
        }
    }
}

fn default_hash_dim() -> usize {
    256
}

fn default_batch() -> usize {
    64
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedConfig {
    #[serde(default)]
    pub global: u64,
    pub multichoice: Option<u64>,
    pub shuffle: Option<u64>,
}

impl SeedConfig {
    pub fn multichoice(&self) -> u64 {
        self.multichoice.unwrap_or(self.global)
    }

    pub fn shuffle(&self) -> u64 {
        self.shuffle.unwrap_or(self.global)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImaginationConfig {
    #[serde(default = "default_threshold")]
    pub novelty_threshold: f64,
    #[serde(default = "default_word_count")]
    pub word_count: usize,
}

impl Default for ImaginationConfig {
    fn default() -> Self {
        Self {
            novelty_threshold: default_threshold(),
            word_count: default_word_count(),
        }
    }
}

fn default_threshold() -> f64 {
    crate::corpus::DEFAULT_NOVELTY_THRESHOLD
}

fn default_word_count() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionConfig {
    #[serde(default = "all_kinds")]
    pub kinds: Vec<VariantKind>,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self { kinds: all_kinds() }
    }
}

fn all_kinds() -> Vec<VariantKind> {
    VariantKind::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub chat: ChatConfig,
    #[serde(default)]
    pub embedding: EmbeddingConfig,
    #[serde(default)]
    pub seeds: SeedConfig,
    #[serde(default)]
    pub geometry: GeometryConfig,
    #[serde(default)]
    pub imagination: ImaginationConfig,
    #[serde(default)]
    pub detection: DetectionConfig,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_output() -> PathBuf {
    PathBuf::from("runs")
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: DataConfig::default(),
            chat: ChatConfig::default(),
            embedding: EmbeddingConfig::default(),
            seeds: SeedConfig::default(),
            geometry: GeometryConfig::default(),
            imagination: ImaginationConfig::default(),
            detection: DetectionConfig::default(),
            output_dir: default_output(),
            base_dir: PathBuf::from("."),
        }
    }
}

impl RunConfig {
    pub fn from_toml(src: &str, base_dir: &Path) -> Result<Self, toml::de::Error> {
        let mut cfg: RunConfig = toml::from_str(src)?;
        cfg.base_dir = base_dir.to_owned();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let src = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        let base = path.parent().map(Path::to_owned).unwrap_or_default();
        Self::from_toml(&src, &base).map_err(|source| ConfigError::Parse {
            path: path.to_owned(),
            source,
        })
    }

    /// `p` relative to the config file's directory (absolute paths pass through).
    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.base_dir.join(p)
    }

    /// Hex SHA-256 of the canonical JSON form of the config.
    pub fn content_hash(&self) -> String {
        crate::provider::sha256_hex(&serde_json::to_string(self).expect("config serializes"))
    }

    /// Structural checks that need no file access.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        match self.chat.mode {
            ChatMode::Fixture => {
                if self.chat.endpoint.is_some() || self.chat.record_to.is_some() {
                    return bad("[chat] fixture mode cannot set `endpoint` or `record_to`".into());
                }
            }
            ChatMode::Live => {
                if self.chat.fixture.is_some() {
                    return bad("[chat] live mode cannot set `fixture`".into());
                }
                if self.chat.endpoint.is_none() || self.chat.model.is_none() {
                    return bad("[chat] live mode needs `endpoint` and `model`".into());
                }
            }
        }
        match self.embedding.mode {
            EmbeddingMode::Fixture if self.embedding.endpoint.is_some() => {
                return bad("[embedding] fixture mode cannot set `endpoint`".into())
            }
            EmbeddingMode::Live if self.embedding.fixture.is_some() => {
                return bad("[embedding] live mode cannot set `fixture`".into())
            }
            EmbeddingMode::Live
                if self.embedding.endpoint.is_none() || self.embedding.model.is_none() =>
            {
                return bad("[embedding] live mode needs `endpoint` and `model`".into())
            }
            EmbeddingMode::Hashing if self.embedding.hashing_dim < 2 => {
                return bad("[embedding] hashing_dim must be at least 2".into())
            }
            _ => {}
        }
        if self.chat.max_concurrent == 0 {
            return bad("[chat] max_concurrent must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.imagination.novelty_threshold) {
            return bad("[imagination] novelty_threshold must lie in [0, 1]".into());
        }
        if self.imagination.word_count == 0 {
            return bad("[imagination] word_count must be positive".into());
        }
        if self.detection.kinds.is_empty() {
            return bad("[detection] kinds is empty".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_from_empty_file() {
        let cfg = RunConfig::from_toml("", Path::new("/x")).unwrap();
        assert_eq!(cfg.chat.mode, ChatMode::Fixture);
        assert_eq!(cfg.imagination.novelty_threshold, 0.3);
        assert_eq!(cfg.detection.kinds.len(), 6);
        assert_eq!(cfg.data.word_vector_dim, 300);
        assert_eq!(cfg.resolve(Path::new("a.csv")), PathBuf::from("/x/a.csv"));
        assert_eq!(
            cfg.resolve(Path::new("/abs.csv")),
            PathBuf::from("/abs.csv")
        );
        cfg.validate().unwrap();
    }

    #[test]
    fn full_file() {
        let src = r#"
output_dir = "out"
[data]
figqa = "figqa.csv"
[chat]
mode = "live"
endpoint = "https://api.example.com/v1"
model = "gpt-4o"
record_to = "rec.jsonl"
[embedding]
mode = "hashing"
[seeds]
global = 42
shuffle = 7
[geometry]
mode = "uncentered"
[detection]
kinds = ["original", "pos"]
"#;
        let cfg = RunConfig::from_toml(src, Path::new(".")).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.seeds.multichoice(), 42);
        assert_eq!(cfg.seeds.shuffle(), 7);
        assert_eq!(cfg.geometry.mode, crate::geometry::PlaneMode::Uncentered);
        assert_eq!(
            cfg.detection.kinds,
            vec![VariantKind::Original, VariantKind::Pos]
        );
    }

    #[test]
    fn mode_exclusivity() {
        let live_with_fixture =
            "[chat]\nmode = \"live\"\nfixture = \"f.jsonl\"\nendpoint = \"e\"\nmodel = \"m\"\n";
        assert!(RunConfig::from_toml(live_with_fixture, Path::new("."))
            .unwrap()
            .validate()
            .is_err());
        let fixture_with_endpoint = "[chat]\nendpoint = \"e\"\n";
        assert!(RunConfig::from_toml(fixture_with_endpoint, Path::new("."))
            .unwrap()
            .validate()
            .is_err());
        assert!(
            RunConfig::from_toml("[chat]\nmode = \"live\"\n", Path::new("."))
                .unwrap()
                .validate()
                .is_err()
        );
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("[chat]\nmodle = \"x\"\n", Path::new(".")).is_err());
    }

    #[test]
    fn hash_ignores_base_dir() {
        let a = RunConfig::from_toml("[seeds]\nglobal = 1\n", Path::new("/a")).unwrap();
        let b = RunConfig::from_toml("[seeds]\nglobal = 1\n", Path::new("/b")).unwrap();
        let c = RunConfig::from_toml("[seeds]\nglobal = 2\n", Path::new("/a")).unwrap();
        assert_eq!(a.content_hash(), b.content_hash());
        assert_ne!(a.content_hash(), c.content_hash());
    }
}
