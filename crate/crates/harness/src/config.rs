//! Run configuration, read from a JSON file. Secrets never appear here;
//! endpoints and engines name the environment variables that hold them.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use xdialect_core::record::EndpointSummary;
use xdialect_core::{ComparatorConfig, Dialect};
use xdialect_engines::DEFAULT_TIMEOUT_MS;

use crate::error::{HarnessError, Result};

/// A chat-completion endpoint. Sampling is always greedy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEndpoint {
    pub model_id: String,
    /// Prefix that `/chat/completions` is appended to.
    pub base_url: String,
    /// Model name sent in the request body; defaults to `model_id`.
    #[serde(default)]
    pub model: Option<String>,
    /// Environment variable holding the bearer token.
    #[serde(default)]
    pub auth_env: Option<String>,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_request_timeout_s")]
    pub request_timeout_s: u64,
}

fn default_max_tokens() -> u32 {
    1024
}

fn default_request_timeout_s() -> u64 {
    120
}

impl ModelEndpoint {
    pub fn new(model_id: &str, base_url: &str) -> Self {
        ModelEndpoint {
            model_id: model_id.to_string(),
            base_url: base_url.to_string(),
            model: None,
            auth_env: None,
            max_tokens: default_max_tokens(),
            request_timeout_s: default_request_timeout_s(),
        }
    }

    pub fn request_model(&self) -> &str {
        self.model.as_deref().unwrap_or(&self.model_id)
    }

    pub fn summary(&self) -> EndpointSummary {
        EndpointSummary { model_id: self.model_id.clone(), base_url: self.base_url.clone(), auth_env: self.auth_env.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessConfig {
    pub runs_dir: PathBuf,
    pub endpoints: Vec<ModelEndpoint>,
    pub judge: Option<ModelEndpoint>,
    /// Dialect id to the environment variable holding its DSN. Dialects not
    /// listed use `POLY_<DIALECT>_DSN`.
    pub dsn_env: BTreeMap<String, String>,
    pub rtol: f64,
    pub atol: f64,
    pub timeout_ms: u64,
    pub parallelism: usize,
    pub pool_size: u32,
    pub batch_size: usize,
    pub sample_limit: usize,
    pub migration_workers: usize,
    /// Initial delay between endpoint retries; doubles per attempt.
    pub retry_backoff_ms: u64,
    pub judge_retries: u32,
    pub judge_in_flight: usize,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        let cmp = ComparatorConfig::default();
        HarnessConfig {
            runs_dir: PathBuf::from("runs"),
            endpoints: Vec::new(),
            judge: None,
            dsn_env: BTreeMap::new(),
            rtol: cmp.rtol,
            atol: cmp.atol,
            timeout_ms: DEFAULT_TIMEOUT_MS,
            parallelism: 8,
            pool_size: 8,
            batch_size: 10_000,
            sample_limit: 1000,
            migration_workers: 1,
            retry_backoff_ms: 500,
            judge_retries: 2,
            judge_in_flight: 4,
        }
    }
}

impl HarnessConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| HarnessError::file(path, e))?;
        let cfg: HarnessConfig = serde_json::from_slice(&bytes).map_err(|e| HarnessError::file(path, e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if !(self.rtol >= 0.0 && self.atol >= 0.0) {
            return bad(format!("tolerances must be non-negative (rtol {}, atol {})", self.rtol, self.atol));
        }
        if self.timeout_ms == 0 || self.parallelism == 0 || self.pool_size == 0 || self.batch_size == 0 {
            return bad("timeout_ms, parallelism, pool_size and batch_size must be positive".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for e in &self.endpoints {
            if !seen.insert(&e.model_id) {
                return bad(format!("endpoint '{}' is listed twice", e.model_id));
            }
        }
        Ok(())
    }

    pub fn endpoint(&self, model_id: &str) -> Result<&ModelEndpoint> {
        self.endpoints.iter().find(|e| e.model_id == model_id).ok_or_else(|| {
            let known: Vec<&str> = self.endpoints.iter().map(|e| e.model_id.as_str()).collect();
            HarnessError::Config(format!("no endpoint for model '{model_id}' (configured: {})", known.join(", ")))
        })
    }

    pub fn comparator(&self) -> ComparatorConfig {
        ComparatorConfig { rtol: self.rtol, atol: self.atol, ..Default::default() }
    }

    pub fn dsn_env_var(&self, dialect: &Dialect) -> String {
        self.dsn_env.get(dialect.id()).cloned().unwrap_or_else(|| dialect.dsn_env_var())
    }
}
