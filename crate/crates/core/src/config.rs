//! Configuration file shared by the CLI and the server, with `QB_*`
//! environment overrides.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::corpus::{load_index, IngestConfig};
use crate::neural_ir::{
    EmbeddingProvider, HashEmbedder, PrecomputedEmbeddings, ProviderMode, RemoteEmbedder,
    VectorIndex,
};
use crate::prob_ir::{FieldWeights, ScoringConfig, TranslationTable};
use crate::session::{Engine, SessionConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub index: PathBuf,
    /// Vector index file; defaults to `vectors.qbv` inside the index directory.
    pub vectors: Option<PathBuf>,
    pub sessions: PathBuf,
    pub translation_table: Option<PathBuf>,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            index: PathBuf::from("index"),
            vectors: None,
            sessions: PathBuf::from("sessions"),
            translation_table: None,
        }
    }
}

impl PathsConfig {
    pub fn vectors_path(&self) -> PathBuf {
        self.vectors
            .clone()
            .unwrap_or_else(|| self.index.join(crate::neural_ir::VECTOR_FILE))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DefaultsConfig {
    pub search_k: usize,
    pub enrich_k: usize,
    pub eval_k: usize,
}

impl Default for DefaultsConfig {
    fn default() -> Self {
        DefaultsConfig {
            search_k: 10,
            enrich_k: 10,
            eval_k: crate::eval::DEFAULT_K,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub host: String,
    pub port: u16,
    /// Allowed CORS origins; `"*"` allows any.
    pub cors_origins: Vec<String>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            host: "127.0.0.1".into(),
            port: 8080,
            cors_origins: vec!["*".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub mode: ProviderMode,
    pub dim: usize,
    /// Precomputed embeddings file (precomputed-file mode).
    pub file: Option<PathBuf>,
    /// Service URL (remote-service mode).
    pub endpoint: Option<String>,
    pub timeout_ms: u64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            mode: ProviderMode::DeterministicHash,
            dim: HashEmbedder::DEFAULT_DIM,
            file: None,
            endpoint: None,
            timeout_ms: 10_000,
        }
    }
}

impl EmbeddingConfig {
    pub fn provider(&self, ingest: &IngestConfig) -> Result<Arc<dyn EmbeddingProvider<f64>>> {
        Ok(match self.mode {
            ProviderMode::DeterministicHash => Arc::new(HashEmbedder::new(self.dim, *ingest)),
            ProviderMode::PrecomputedFile => {
                let path = self.file.as_ref().ok_or_else(|| {
                    Error::InvalidConfig(
                        "embedding.file is required in precomputed-file mode".into(),
                    )
                })?;
                Arc::new(PrecomputedEmbeddings::<f64>::load(path)?)
            }
            ProviderMode::RemoteService => {
                let endpoint = self.endpoint.as_ref().ok_or_else(|| {
                    Error::InvalidConfig(
                        "embedding.endpoint is required in remote-service mode".into(),
                    )
                })?;
                Arc::new(RemoteEmbedder::new(
                    endpoint.clone(),
                    self.dim,
                    Duration::from_millis(self.timeout_ms),
                ))
            }
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub paths: PathsConfig,
    pub ingest: IngestConfig,
    pub scoring: ScoringConfig<f64>,
    pub field_weights: FieldWeights<f64>,
    pub defaults: DefaultsConfig,
    pub server: ServerConfig,
    pub embedding: EmbeddingConfig,
}

impl AppConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: AppConfig =
            toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path` (or starts from defaults) and applies `QB_*` variables
    /// from the process environment.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                Self::from_toml(&text).map_err(|e| match e {
                    Error::InvalidConfig(m) => Error::BadFormat {
                        path: p.to_path_buf(),
                        message: m,
                    },
                    other => other,
                })?
            }
            None => AppConfig::default(),
        };
        cfg.apply_env(std::env::vars())?;
        Ok(cfg)
    }

    /// Applies overrides: `QB_INDEX`, `QB_VECTORS`, `QB_SESSIONS`,
    /// `QB_TRANSLATION_TABLE`, `QB_ALPHA`, `QB_HOST`, `QB_PORT`,
    /// `QB_EMBEDDING_MODE`, `QB_EMBEDDING_FILE`, `QB_EMBEDDING_ENDPOINT`.
    pub fn apply_env(&mut self, vars: impl IntoIterator<Item = (String, String)>) -> Result<()> {
        let bad =
            |key: &str, value: &str| Error::InvalidConfig(format!("{key}={value:?} is not valid"));
        for (key, value) in vars {
            match key.as_str() {
                "QB_INDEX" => self.paths.index = value.into(),
                "QB_VECTORS" => self.paths.vectors = Some(value.into()),
                "QB_SESSIONS" => self.paths.sessions = value.into(),
                "QB_TRANSLATION_TABLE" => self.paths.translation_table = Some(value.into()),
                "QB_ALPHA" => self.scoring.alpha = value.parse().map_err(|_| bad(&key, &value))?,
                "QB_HOST" => self.server.host = value,
                "QB_PORT" => self.server.port = value.parse().map_err(|_| bad(&key, &value))?,
                "QB_EMBEDDING_MODE" => {
                    self.embedding.mode =
                        serde_json::from_value(serde_json::Value::String(value.clone()))
                            .map_err(|_| bad(&key, &value))?
                }
                "QB_EMBEDDING_FILE" => self.embedding.file = Some(value.into()),
                "QB_EMBEDDING_ENDPOINT" => self.embedding.endpoint = Some(value),
                _ => {}
            }
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        self.scoring.validate()?;
        self.field_weights.validate()?;
        if self.embedding.dim == 0 {
            return Err(Error::InvalidConfig(
                "embedding.dim must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn session_config(&self) -> SessionConfig {
        let mut scoring = self.scoring;
        scoring.target = crate::corpus::Target::Sentences;
        SessionConfig {
            field_weights: self.field_weights.clone(),
            scoring,
            search_k: self.defaults.search_k,
            enrich_k: self.defaults.enrich_k,
        }
    }
}

impl Engine {
    /// Loads the index and translation table named by `cfg`, plus the vector
    /// index when its file exists.
    pub fn open(cfg: &AppConfig) -> Result<Engine> {
        let (corpus, index) = load_index(&cfg.paths.index)?;
        let translation = match &cfg.paths.translation_table {
            Some(path) => TranslationTable::load(path)?,
            None => TranslationTable::Identity,
        };
        let mut engine = Engine::new(corpus, index, translation)?;
        let provider = cfg.embedding.provider(engine.corpus.config())?;
        let vectors = cfg.paths.vectors_path();
        if vectors.is_file() {
            engine.with_vectors(VectorIndex::load(&vectors)?, provider)
        } else {
            engine.provider = provider;
            Ok(engine)
        }
    }
}
