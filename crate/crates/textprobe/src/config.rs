//! Declarative experiment configuration (TOML) and its resolution into a
//! runnable experiment. Secrets never live in the file: HTTP providers name
//! the environment variable holding their key.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{load_document, Document, SegmentationConfig, TextType};
use crate::provider::{
    CompletionProvider, GenerationParams, HttpProvider, HttpProviderConfig, MemorizerModel,
    DEFAULT_PROMPT_TEMPLATE,
};
use crate::runner::Experiment;
use crate::RougeConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read config {path}: {source}")]
    Unreadable {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error in {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
    #[error("environment variable {0} (api key) is not set")]
    MissingApiKey(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub path: PathBuf,
    pub title: String,
    pub text_type: TextType,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProviderDecl {
    Http {
        name: String,
        base_url: String,
        #[serde(skip_serializing_if = "Option::is_none")]
        api_key_env: Option<String>,
        #[serde(default = "default_timeout_secs")]
        timeout_secs: u64,
        #[serde(default = "default_max_retries")]
        max_retries: u32,
        #[serde(default = "default_in_flight")]
        max_in_flight: usize,
        #[serde(skip_serializing_if = "Option::is_none")]
        requests_per_minute: Option<u32>,
    },
    Memorizer {
        name: String,
        /// Word source for the memorizer; defaults to the concatenated corpus.
        #[serde(skip_serializing_if = "Option::is_none")]
        source_path: Option<PathBuf>,
        #[serde(default = "default_context_len")]
        context_len: usize,
        #[serde(default = "default_fidelity")]
        fidelity: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        divergence_point: Option<usize>,
    },
}

impl ProviderDecl {
    pub fn name(&self) -> &str {
        match self {
            ProviderDecl::Http { name, .. } => name,
            ProviderDecl::Memorizer { name, .. } => name,
        }
    }
}

fn default_timeout_secs() -> u64 {
    60
}
fn default_max_retries() -> u32 {
    3
}
fn default_in_flight() -> usize {
    4
}
fn default_context_len() -> usize {
    8
}
fn default_fidelity() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDecl {
    pub provider: String,
    pub model: String,
}

/// Generation parameter defaults; `model` comes from each [[models]] entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsSection {
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_template")]
    pub prompt_template: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub system_message: Option<String>,
}

fn default_max_tokens() -> u32 {
    50
}
fn default_template() -> String {
    DEFAULT_PROMPT_TEMPLATE.to_string()
}

impl Default for ParamsSection {
    fn default() -> Self {
        ParamsSection {
            temperature: 0.0,
            max_tokens: default_max_tokens(),
            prompt_template: default_template(),
            system_message: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateSection {
    #[serde(default = "default_seed_words")]
    pub seed_word_count: usize,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
}

fn default_seed_words() -> usize {
    20
}
fn default_iterations() -> usize {
    5
}

impl Default for IterateSection {
    fn default() -> Self {
        IterateSection {
            seed_word_count: default_seed_words(),
            iterations: default_iterations(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigFile {
    pub schema_version: u32,
    pub output_dir: PathBuf,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default)]
    pub rng_seed: u64,
    pub corpus: Vec<CorpusEntry>,
    #[serde(default)]
    pub segmentation: SegmentationConfig,
    pub providers: Vec<ProviderDecl>,
    pub models: Vec<ModelDecl>,
    #[serde(default)]
    pub params: ParamsSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Vec<u32>>,
    #[serde(default)]
    pub rouge: RougeConfig,
    #[serde(default)]
    pub iterate: IterateSection,
    /// model_id -> family name, for the by-family rate table.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub families: BTreeMap<String, String>,
}

fn default_parallelism() -> usize {
    4
}

impl ConfigFile {
    pub fn from_str(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let cfg: ConfigFile = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Unreadable {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_str(&text, &path.display().to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialization")
    }

    /// Hash of the canonical serialization; stamped into every store record.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.to_toml().as_bytes());
        hex::encode(&hasher.finalize()[..8])
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::Invalid(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.corpus.is_empty() {
            return Err(ConfigError::Invalid("corpus list is empty".into()));
        }
        if self.models.is_empty() {
            return Err(ConfigError::Invalid("models list is empty".into()));
        }
        let mut names = std::collections::HashSet::new();
        for p in &self.providers {
            if !names.insert(p.name()) {
                return Err(ConfigError::Invalid(format!(
                    "duplicate provider name {}",
                    p.name()
                )));
            }
            if let ProviderDecl::Memorizer { fidelity, context_len, .. } = p {
                if !(0.0..=1.0).contains(fidelity) {
                    return Err(ConfigError::Invalid("memorizer fidelity must be in [0, 1]".into()));
                }
                if *context_len == 0 {
                    return Err(ConfigError::Invalid("memorizer context_len must be positive".into()));
                }
            }
        }
        for m in &self.models {
            if !names.contains(m.provider.as_str()) {
                return Err(ConfigError::Invalid(format!(
                    "model {} references undeclared provider {}",
                    m.model, m.provider
                )));
            }
        }
        if let Some(sweep) = &self.sweep {
            let distinct: std::collections::HashSet<_> = sweep.iter().collect();
            if sweep.is_empty() || distinct.len() != sweep.len() || sweep.contains(&0) {
                return Err(ConfigError::Invalid(
                    "sweep values must be distinct and positive".into(),
                ));
            }
        }
        if self.parallelism == 0 {
            return Err(ConfigError::Invalid("parallelism must be >= 1".into()));
        }
        if self.params.max_tokens == 0 {
            return Err(ConfigError::Invalid("params.max_tokens must be >= 1".into()));
        }
        self.rouge.validate().map_err(ConfigError::Invalid)?;
        self.segmentation
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.generation_params()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }

    pub fn generation_params(&self) -> GenerationParams {
        GenerationParams {
            model: String::new(),
            temperature: self.params.temperature,
            max_tokens: self.params.max_tokens,
            prompt_template: self.params.prompt_template.clone(),
            system_message: self.params.system_message.clone(),
        }
    }

    /// Load every corpus document. Relative paths resolve against `base_dir`
    /// (normally the config file's directory), so configs stay portable.
    pub fn load_corpus(&self, base_dir: &Path) -> Result<Vec<Document>, ConfigError> {
        let mut ids = std::collections::HashSet::new();
        let mut docs = Vec::new();
        for entry in &self.corpus {
            let path = if entry.path.is_absolute() {
                entry.path.clone()
            } else {
                base_dir.join(&entry.path)
            };
            let doc = load_document(&path, entry.text_type, &entry.title)?;
            if !ids.insert(doc.id.clone()) {
                return Err(ConfigError::Invalid(format!(
                    "duplicate document id {} in corpus",
                    doc.id
                )));
            }
            docs.push(doc);
        }
        Ok(docs)
    }

    /// Construct provider handles. Memorizers without an explicit source use
    /// the concatenation of all corpus documents' words.
    pub fn build_providers(
        &self,
        base_dir: &Path,
        docs: &[Document],
    ) -> Result<BTreeMap<String, Arc<dyn CompletionProvider>>, ConfigError> {
        let mut providers: BTreeMap<String, Arc<dyn CompletionProvider>> = BTreeMap::new();
        for decl in &self.providers {
            let provider: Arc<dyn CompletionProvider> = match decl {
                ProviderDecl::Http {
                    name,
                    base_url,
                    api_key_env,
                    timeout_secs,
                    max_retries,
                    max_in_flight,
                    requests_per_minute,
                } => {
                    let api_key = match api_key_env {
                        Some(var) => Some(
                            std::env::var(var)
                                .map_err(|_| ConfigError::MissingApiKey(var.clone()))?,
                        ),
                        None => None,
                    };
                    Arc::new(HttpProvider::new(HttpProviderConfig {
                        name: name.clone(),
                        base_url: base_url.clone(),
                        api_key,
                        timeout: Duration::from_secs(*timeout_secs),
                        max_retries: *max_retries,
                        backoff_base: Duration::from_millis(250),
                        max_in_flight: *max_in_flight,
                        requests_per_minute: *requests_per_minute,
                    }))
                }
                ProviderDecl::Memorizer {
                    name,
                    source_path,
                    context_len,
                    fidelity,
                    divergence_point,
                } => {
                    let source_words = match source_path {
                        Some(p) => {
                            let path = if p.is_absolute() { p.clone() } else { base_dir.join(p) };
                            let doc = load_document(&path, TextType::Other, name)?;
                            doc.words
                        }
                        None => docs.iter().flat_map(|d| d.words.iter().cloned()).collect(),
                    };
                    Arc::new(MemorizerModel::new(
                        name.clone(),
                        source_words,
                        *context_len,
                        *fidelity,
                        *divergence_point,
                        self.rng_seed,
                    ))
                }
            };
            providers.insert(decl.name().to_string(), provider);
        }
        Ok(providers)
    }

    /// Resolve the whole config into a runnable experiment.
    pub fn to_experiment(
        &self,
        base_dir: &Path,
        output_dir_override: Option<&Path>,
    ) -> Result<Experiment, ConfigError> {
        let docs = self.load_corpus(base_dir)?;
        let providers = self.build_providers(base_dir, &docs)?;
        let output_dir = output_dir_override
            .map(Path::to_path_buf)
            .unwrap_or_else(|| {
                if self.output_dir.is_absolute() {
                    self.output_dir.clone()
                } else {
                    base_dir.join(&self.output_dir)
                }
            });
        Ok(Experiment {
            docs,
            segmentation: self.segmentation.clone(),
            providers,
            models: self
                .models
                .iter()
                .map(|m| (m.provider.clone(), m.model.clone()))
                .collect(),
            params: self.generation_params(),
            max_tokens_sweep: self.sweep.clone(),
            rouge: self.rouge.clone(),
            output_dir,
            parallelism: self.parallelism,
            config_hash: self.hash(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_toml() -> String {
        r#"
schema_version = 1
output_dir = "out"
rng_seed = 7

[[corpus]]
path = "doc.txt"
title = "Doc"
text_type = "novel"

[[providers]]
kind = "memorizer"
name = "mem"
fidelity = 1.0

[[models]]
provider = "mem"
model = "memorizer"
"#
        .to_string()
    }

    #[test]
    fn parse_applies_defaults() {
        let cfg = ConfigFile::from_str(&minimal_toml(), "test").unwrap();
        assert_eq!(cfg.parallelism, 4);
        assert_eq!(cfg.segmentation.sample_len, 50);
        assert_eq!(cfg.params.max_tokens, 50);
        assert_eq!(cfg.rouge.high_similarity_threshold, 0.85);
        assert!(cfg.sweep.is_none());
    }

    #[test]
    fn round_trip_is_identity() {
        let cfg = ConfigFile::from_str(&minimal_toml(), "test").unwrap();
        let serialized = cfg.to_toml();
        let reparsed = ConfigFile::from_str(&serialized, "test").unwrap();
        assert_eq!(cfg, reparsed);
        assert_eq!(cfg.hash(), reparsed.hash());
    }

    #[test]
    fn hash_changes_with_content() {
        let a = ConfigFile::from_str(&minimal_toml(), "test").unwrap();
        let mut b = a.clone();
        b.rng_seed = 8;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn validation_failures() {
        let base = minimal_toml();
        // unknown provider reference
        let bad = base.replace("provider = \"mem\"", "provider = \"nope\"");
        assert!(ConfigFile::from_str(&bad, "t").is_err());
        // wrong schema version
        let bad = base.replace("schema_version = 1", "schema_version = 99");
        assert!(ConfigFile::from_str(&bad, "t").is_err());
        // empty corpus
        let bad = base.replace("[[corpus]]", "[[corpus_disabled]]");
        assert!(ConfigFile::from_str(&bad, "t").is_err());
        // duplicate sweep values (top-level key, so it must precede tables)
        let bad = format!("sweep = [50, 50]\n{base}");
        assert!(ConfigFile::from_str(&bad, "t").is_err());
        let ok = format!("sweep = [50, 100]\n{base}");
        assert_eq!(
            ConfigFile::from_str(&ok, "t").unwrap().sweep,
            Some(vec![50, 100])
        );
    }

    #[test]
    fn missing_api_key_env_is_an_error() {
        let toml_text = minimal_toml().replace(
            "kind = \"memorizer\"\nname = \"mem\"\nfidelity = 1.0",
            "kind = \"http\"\nname = \"mem\"\nbase_url = \"http://localhost:1\"\napi_key_env = \"TEXTPROBE_TEST_KEY_THAT_DOES_NOT_EXIST\"",
        );
        let cfg = ConfigFile::from_str(&toml_text, "t").unwrap();
        let err = cfg.build_providers(Path::new("."), &[]);
        assert!(matches!(err, Err(ConfigError::MissingApiKey(_))));
    }

    #[test]
    fn experiment_resolution_with_corpus() {
        let dir = tempfile::tempdir().unwrap();
        let words: Vec<String> = (0..120).map(|i| format!("w{i}")).collect();
        std::fs::write(dir.path().join("doc.txt"), words.join(" ")).unwrap();
        let cfg = ConfigFile::from_str(&minimal_toml(), "t").unwrap();
        let exp = cfg.to_experiment(dir.path(), None).unwrap();
        assert_eq!(exp.docs.len(), 1);
        assert_eq!(exp.models.len(), 1);
        assert!(exp.providers.contains_key("mem"));
        assert_eq!(exp.output_dir, dir.path().join("out"));
    }
}
