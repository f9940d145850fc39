//! Access to the language model and embedding endpoints.
//!
//! Every pipeline stage talks to models through two small traits,
//! [`Completer`] and [`Embedder`]. [`Provider`] implements both and is driven
//! by a [`ProviderConfig`]: in `fixture` mode completions come from a JSON map
//! and embeddings from a deterministic character-trigram hasher, in `http`
//! mode both are fetched from a remote endpoint.
//!
//! Wire format (UTF-8 JSON, `POST <endpoint>`):
//!
//! ```text
//! {"prompt": "..."}  ->  {"candidates": ["...", ...]}
//! {"input": "..."}   ->  {"embedding": [0.1, ...]}
//! ```

mod embedding;
mod http;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use embedding::{cosine, trigram_embedding, EmbeddingVector, StaticEmbedder};

use crate::error::{Error, Result};

/// Environment variable that overrides [`ProviderConfig::mode`].
pub const PROVIDER_MODE_ENV: &str = "SCENE_MMKG_PROVIDER";

pub const DEFAULT_DIMENSION: usize = 256;
pub const DEFAULT_TIMEOUT_MS: u64 = 30_000;
pub const DEFAULT_MAX_RETRIES: u32 = 2;

/// Produces ordered candidate outputs for a prompt.
///
/// `key` names the prompt for fixture lookups (for example
/// `kitchen-profile-0`); remote providers only see `prompt`.
pub trait Completer: Send + Sync {
    fn complete(&self, key: &str, prompt: &str) -> Result<Vec<String>>;
}

/// Maps text onto a vector space of fixed dimension.
pub trait Embedder: Send + Sync {
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<EmbeddingVector>;
}

impl<T: Completer + ?Sized> Completer for &T {
    fn complete(&self, key: &str, prompt: &str) -> Result<Vec<String>> {
        (**self).complete(key, prompt)
    }
}

impl<T: Embedder + ?Sized> Embedder for &T {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        (**self).embed(text)
    }
}

impl<T: Embedder + ?Sized> Embedder for Box<T> {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        (**self).embed(text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderMode {
    Fixture,
    Http,
}

impl std::str::FromStr for ProviderMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fixture" => Ok(ProviderMode::Fixture),
            "http" => Ok(ProviderMode::Http),
            other => Err(Error::Config(format!(
                "unknown provider mode `{other}` (expected `fixture` or `http`)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub mode: ProviderMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture_path: Option<PathBuf>,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_dimension")]
    pub dimension: usize,
}

fn default_timeout_ms() -> u64 {
    DEFAULT_TIMEOUT_MS
}

fn default_max_retries() -> u32 {
    DEFAULT_MAX_RETRIES
}

fn default_dimension() -> usize {
    DEFAULT_DIMENSION
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig::fixture(None)
    }
}

impl ProviderConfig {
    pub fn fixture(fixture_path: Option<PathBuf>) -> Self {
        ProviderConfig {
            mode: ProviderMode::Fixture,
            endpoint: None,
            timeout_ms: DEFAULT_TIMEOUT_MS,
            fixture_path,
            max_retries: DEFAULT_MAX_RETRIES,
            dimension: DEFAULT_DIMENSION,
        }
    }

    pub fn http(endpoint: impl Into<String>) -> Self {
        ProviderConfig {
            mode: ProviderMode::Http,
            endpoint: Some(endpoint.into()),
            ..ProviderConfig::fixture(None)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.timeout_ms == 0 {
            return Err(Error::Config("timeout_ms must be positive".into()));
        }
        if self.dimension == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        if self.mode == ProviderMode::Http
            && self.endpoint.as_deref().is_none_or(|e| e.trim().is_empty())
        {
            return Err(Error::Config("http mode requires `endpoint`".into()));
        }
        Ok(())
    }

    /// Applies [`PROVIDER_MODE_ENV`] when it is set.
    pub fn with_env_override(mut self) -> Result<Self> {
        if let Ok(mode) = std::env::var(PROVIDER_MODE_ENV) {
            if !mode.trim().is_empty() {
                self.mode = mode.parse()?;
            }
        }
        Ok(self)
    }

    /// Resolves a relative `fixture_path` against `base`.
    pub fn resolve_paths(mut self, base: &Path) -> Self {
        if let Some(p) = &self.fixture_path {
            if p.is_relative() {
                self.fixture_path = Some(base.join(p));
            }
        }
        self
    }
}

/// Loads a fixture file: a JSON object mapping prompt keys to candidate lists.
pub fn load_fixture(path: &Path) -> Result<BTreeMap<String, Vec<String>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

/// Configured access to a completion and embedding backend.
///
/// Immutable after construction; clones share the fixture table.
#[derive(Clone)]
pub struct Provider {
    config: ProviderConfig,
    fixture: Option<Arc<BTreeMap<String, Vec<String>>>>,
    client: Option<http::HttpClient>,
}

impl std::fmt::Debug for Provider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Provider")
            .field("config", &self.config)
            .field("fixture_keys", &self.fixture.as_ref().map(|m| m.len()))
            .finish()
    }
}

impl Provider {
    pub fn new(config: ProviderConfig) -> Result<Self> {
        config.validate()?;
        let fixture = match (&config.mode, &config.fixture_path) {
            (ProviderMode::Fixture, Some(path)) => Some(Arc::new(load_fixture(path)?)),
            _ => None,
        };
        let client = match config.mode {
            ProviderMode::Http => Some(http::HttpClient::new(&config)),
            ProviderMode::Fixture => None,
        };
        Ok(Provider {
            config,
            fixture,
            client,
        })
    }

    /// Offline provider with no completion fixture.
    pub fn offline(dimension: usize) -> Self {
        Provider {
            config: ProviderConfig {
                dimension,
                ..ProviderConfig::default()
            },
            fixture: None,
            client: None,
        }
    }

    /// Fixture provider backed by an in-memory response table.
    pub fn from_fixture_map(map: BTreeMap<String, Vec<String>>) -> Self {
        Provider {
            config: ProviderConfig::default(),
            fixture: Some(Arc::new(map)),
            client: None,
        }
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }

    /// Completes a prompt using the prompt text itself as the fixture key.
    pub fn complete_prompt(&self, prompt: &str) -> Result<Vec<String>> {
        self.complete(prompt, prompt)
    }
}

impl Completer for Provider {
    fn complete(&self, key: &str, prompt: &str) -> Result<Vec<String>> {
        if prompt.trim().is_empty() {
            return Err(Error::Precondition("prompt must be non-empty".into()));
        }
        match (&self.client, &self.fixture) {
            (Some(client), _) => client.complete(prompt),
            (None, Some(table)) => table
                .get(key)
                .or_else(|| table.get(prompt))
                .cloned()
                .ok_or_else(|| Error::FixtureMiss(key.to_string())),
            (None, None) => Err(Error::Config(
                "fixture mode completion requires `fixture_path`".into(),
            )),
        }
    }
}

impl Embedder for Provider {
    fn dimension(&self) -> usize {
        self.config.dimension
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        if text.trim().is_empty() {
            return Err(Error::Precondition(
                "text to embed must be non-empty".into(),
            ));
        }
        match &self.client {
            Some(client) => {
                let values = client.embed(text)?;
                if values.len() != self.config.dimension {
                    return Err(Error::Contract(format!(
                        "endpoint returned dimension {}, configured {}",
                        values.len(),
                        self.config.dimension
                    )));
                }
                Ok(EmbeddingVector::normalized(values))
            }
            None => Ok(trigram_embedding(text, self.config.dimension)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kitchen_fixture() -> Provider {
        let mut map = BTreeMap::new();
        map.insert(
            "kitchen-profile-0".to_string(),
            vec!["mug".to_string(), "sink".to_string(), "stove".to_string()],
        );
        Provider::from_fixture_map(map)
    }

    #[test]
    fn fixture_echoes_configured_response() {
        let p = kitchen_fixture();
        let out = p.complete("kitchen-profile-0", "whatever prompt").unwrap();
        assert_eq!(out, vec!["mug", "sink", "stove"]);
    }

    #[test]
    fn empty_prompt_is_precondition_error() {
        let p = kitchen_fixture();
        assert!(matches!(
            p.complete("kitchen-profile-0", "  "),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(p.complete_prompt(""), Err(Error::Precondition(_))));
    }

    #[test]
    fn fixture_miss_names_the_key() {
        let p = kitchen_fixture();
        match p.complete("bedroom-profile-3", "list objects") {
            Err(Error::FixtureMiss(key)) => assert_eq!(key, "bedroom-profile-3"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = ProviderConfig::http("http://localhost:1");
        assert!(cfg.validate().is_ok());
        cfg.timeout_ms = 0;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let cfg = ProviderConfig {
            endpoint: None,
            ..ProviderConfig::http("x")
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn config_parses_with_defaults() {
        let cfg: ProviderConfig = serde_json::from_str(r#"{"mode":"fixture"}"#).unwrap();
        assert_eq!(cfg.dimension, 256);
        assert_eq!(cfg.timeout_ms, DEFAULT_TIMEOUT_MS);
        assert!("carrier-pigeon".parse::<ProviderMode>().is_err());
    }

    #[test]
    fn offline_embedding_is_unit_norm_and_deterministic() {
        let p = Provider::offline(256);
        let a = p.embed("chair").unwrap();
        let b = p.embed("chair").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.dim(), 256);
        assert!((a.norm() - 1.0).abs() < 1e-6);
        assert!(matches!(p.embed(""), Err(Error::Precondition(_))));
    }
}
