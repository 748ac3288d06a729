use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use lore_core::pipeline::PipelineConfig;
use lore_core::reader::{ReaderConfig, DEFAULT_PROMPT_TEMPLATE, DEFAULT_STUB_EMBED_DIM};
use serde::{Deserialize, Serialize};

pub const CONFIG_ENV: &str = "LORE_CONFIG";
pub const DEFAULT_CONFIG_FILE: &str = "lore.json";

/// Settings for every subcommand. Command-line flags override values read
/// from the JSON config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub corpus_path: Option<PathBuf>,
    pub embeddings_path: Option<PathBuf>,
    pub index_dir: Option<PathBuf>,
    /// Inference sidecar base URL; without it the stub reader is used.
    pub reader_endpoint: Option<String>,
    /// `{query, passage_id, answer, token_probs}` JSONL for the stub reader.
    pub reader_stub_table: Option<PathBuf>,
    pub reader_max_tokens: usize,
    pub reader_timeout_secs: u64,
    pub reader_retries: usize,
    pub prompt_template: String,
    pub stub_embed_dim: usize,
    pub pipeline: PipelineConfig,
    pub port: u16,
    /// `eval` exits non-zero when more than this fraction of questions fail.
    pub max_failure_fraction: f64,
}

impl Default for AppConfig {
    fn default() -> Self {
        AppConfig {
            corpus_path: None,
            embeddings_path: None,
            index_dir: None,
            reader_endpoint: None,
            reader_stub_table: None,
            reader_max_tokens: 32,
            reader_timeout_secs: 30,
            reader_retries: 2,
            prompt_template: DEFAULT_PROMPT_TEMPLATE.to_owned(),
            stub_embed_dim: DEFAULT_STUB_EMBED_DIM,
            pipeline: PipelineConfig::default(),
            port: 8080,
            max_failure_fraction: 0.1,
        }
    }
}

impl AppConfig {
    /// Loads the config file chosen by `explicit`, then `$LORE_CONFIG`, then
    /// `./lore.json` if it exists; otherwise defaults.
    pub fn resolve(explicit: Option<&Path>) -> Result<Self> {
        let env_path = std::env::var_os(CONFIG_ENV).map(PathBuf::from);
        let path = match (explicit, env_path) {
            (Some(p), _) => Some(p.to_owned()),
            (None, Some(p)) => Some(p),
            (None, None) => Some(PathBuf::from(DEFAULT_CONFIG_FILE)).filter(|p| p.exists()),
        };
        let config = match path {
            Some(p) => Self::from_file(&p)?,
            None => AppConfig::default(),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("cannot read config file {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("invalid config file {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.port == 0 {
            bail!("port must be between 1 and 65535");
        }
        if !(0.0..=1.0).contains(&self.max_failure_fraction) {
            bail!("max_failure_fraction must lie in [0, 1]");
        }
        if self.stub_embed_dim == 0 {
            bail!("stub_embed_dim must be >= 1");
        }
        self.pipeline.validate()?;
        Ok(())
    }

    pub fn index_dir(&self) -> PathBuf {
        self.index_dir.clone().unwrap_or_else(|| PathBuf::from("index"))
    }

    pub fn http_reader_config(&self, endpoint: &str) -> ReaderConfig {
        ReaderConfig {
            endpoint_url: endpoint.to_owned(),
            max_tokens: self.reader_max_tokens,
            prompt_template: self.prompt_template.clone(),
            timeout: Duration::from_secs(self.reader_timeout_secs),
            retries: self.reader_retries,
        }
    }

    /// Raises `retrieval_depth` if a `top_k` override needs it.
    pub fn set_top_k(&mut self, top_k: usize) {
        self.pipeline.top_k = top_k;
        self.pipeline.retrieval_depth = self.pipeline.retrieval_depth.max(top_k);
    }
}
