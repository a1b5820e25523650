//! The run configuration document.
//!
//! A single versioned TOML file names the models (with pricing), providers,
//! retry policy, rate limits, and run defaults. Credentials never appear in
//! the file — each provider entry names the environment variable that holds
//! its API key. Dotted-path `key=value` overrides rewrite the document
//! before it is interpreted, last one wins.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, DatasetKind};
use crate::gateway::{
    Backoff, CallParams, Clock, DiskCache, FixedClock, Gateway, HttpBackend, MockBackend,
    ModelHandle, Pricing, RetryPolicy, SystemClock,
};
use crate::orchestrator::{HyperParams, RunConfig, Variant};
use crate::prompt::{CommunicationStrategy, SchemaSet, TaskKind};
use crate::score::Rational;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parsing {path}: {message}")]
    Parse { path: String, message: String },
    #[error("config version {0} is not supported")]
    UnknownVersion(u32),
    #[error("bad override {spec:?}: {message}")]
    BadOverride { spec: String, message: String },
    #[error("run names model {0:?} but [models.{0}] is missing")]
    UnknownModel(String),
    #[error("model {model:?} names provider {provider:?} but [providers.{provider}] is missing")]
    UnknownProvider { model: String, provider: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSection {
    #[serde(default)]
    pub method: Option<String>,
    pub variant: Variant,
    #[serde(default)]
    pub n: Option<u32>,
    #[serde(default)]
    pub strategy: Option<CommunicationStrategy>,
    pub peers: Vec<String>,
    pub area_chair: String,
    #[serde(default)]
    pub min_peers: Option<usize>,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    #[serde(default)]
    pub seed_tag: String,
    #[serde(default)]
    pub fail_fast: bool,
    /// Freeze all clocks; timings and timestamps become zero. For
    /// reproducible fixtures and tests.
    #[serde(default)]
    pub fixed_clock: bool,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
}

fn default_concurrency() -> usize {
    4
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSection {
    pub provider: String,
    pub model_id: String,
    #[serde(default)]
    pub input_cost_per_1k: Rational,
    #[serde(default)]
    pub output_cost_per_1k: Rational,
    #[serde(default)]
    pub supports_n: bool,
    #[serde(default)]
    pub supports_images: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProviderSection {
    /// OpenAI-compatible chat-completions endpoint.
    Openai {
        base_url: String,
        api_key_env: String,
        #[serde(default)]
        requests_per_minute: Option<u32>,
        #[serde(default = "default_timeout_secs")]
        timeout_secs: u64,
    },
    /// Deterministic scripted backend.
    Mock {
        /// Script file path, relative to the config file.
        script: PathBuf,
    },
}

fn default_timeout_secs() -> u64 {
    120
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RetrySection {
    #[serde(default)]
    pub max_attempts: Option<u32>,
    #[serde(default)]
    pub initial_backoff_ms: Option<u64>,
    #[serde(default)]
    pub backoff_multiplier: Option<f64>,
    #[serde(default)]
    pub max_backoff_ms: Option<u64>,
}

/// Partial [`CallParams`]: unset fields keep the task defaults.
/// `max_tokens = 0` means unlimited.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CallParamsSection {
    #[serde(default)]
    pub temperature: Option<f64>,
    #[serde(default)]
    pub top_p: Option<f64>,
    #[serde(default)]
    pub max_tokens: Option<u32>,
}

impl CallParamsSection {
    fn apply(&self, base: CallParams) -> CallParams {
        CallParams {
            temperature: self.temperature.unwrap_or(base.temperature),
            top_p: self.top_p.unwrap_or(base.top_p),
            max_tokens: match self.max_tokens {
                None => base.max_tokens,
                Some(0) => None,
                Some(v) => Some(v),
            },
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct HyperSection {
    #[serde(default)]
    pub peer: CallParamsSection,
    #[serde(default)]
    pub area_chair: CallParamsSection,
    #[serde(default)]
    pub auto_prompt: CallParamsSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfigDocument {
    pub version: u32,
    pub run: RunSection,
    pub models: BTreeMap<String, ModelSection>,
    pub providers: BTreeMap<String, ProviderSection>,
    #[serde(default)]
    pub retry: RetrySection,
    #[serde(default)]
    pub hyperparameters: HyperSection,
}

/// A parsed config plus the post-override document for snapshotting.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub document: ConfigDocument,
    pub snapshot: serde_json::Value,
    pub base_dir: PathBuf,
}

/// Applies one `a.b.c=value` override to a TOML document. The value is
/// parsed as TOML when possible and falls back to a bare string.
pub fn apply_override(root: &mut toml::Value, spec: &str) -> Result<(), ConfigError> {
    let bad = |message: &str| ConfigError::BadOverride {
        spec: spec.to_string(),
        message: message.to_string(),
    };
    let (path, raw_value) = spec.split_once('=').ok_or_else(|| bad("expected key=value"))?;
    let segments: Vec<&str> = path.split('.').map(str::trim).collect();
    if segments.is_empty() || segments.iter().any(|s| s.is_empty()) {
        return Err(bad("empty path segment"));
    }

    let value: toml::Value = match raw_value.parse::<toml::Value>() {
        Ok(v) => v,
        Err(_) => toml::Value::String(raw_value.to_string()),
    };

    let mut current = root;
    for segment in &segments[..segments.len() - 1] {
        let table = current
            .as_table_mut()
            .ok_or_else(|| bad("path crosses a non-table value"))?;
        current = table
            .entry(segment.to_string())
            .or_insert_with(|| toml::Value::Table(toml::map::Map::new()));
    }
    let table = current
        .as_table_mut()
        .ok_or_else(|| bad("path crosses a non-table value"))?;
    table.insert(segments[segments.len() - 1].to_string(), value);
    Ok(())
}

/// Loads the config file and applies dotted-path overrides in order.
pub fn load_config(path: &Path, overrides: &[String]) -> Result<LoadedConfig, ConfigError> {
    let display = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: display.clone(),
        source,
    })?;
    let mut value: toml::Value = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse {
        path: display.clone(),
        message: e.to_string(),
    })?;
    for spec in overrides {
        apply_override(&mut value, spec)?;
    }
    let document: ConfigDocument =
        value.clone().try_into().map_err(|e: toml::de::Error| ConfigError::Parse {
            path: display.clone(),
            message: e.to_string(),
        })?;
    if document.version != CONFIG_VERSION {
        return Err(ConfigError::UnknownVersion(document.version));
    }
    let snapshot = serde_json::to_value(&value).map_err(|e| ConfigError::Parse {
        path: display,
        message: e.to_string(),
    })?;
    Ok(LoadedConfig {
        document,
        snapshot,
        base_dir: path.parent().unwrap_or(Path::new(".")).to_path_buf(),
    })
}

impl ConfigDocument {
    pub fn model_handle(&self, name: &str) -> Result<ModelHandle, ConfigError> {
        let section = self
            .models
            .get(name)
            .ok_or_else(|| ConfigError::UnknownModel(name.to_string()))?;
        if !self.providers.contains_key(&section.provider) {
            return Err(ConfigError::UnknownProvider {
                model: name.to_string(),
                provider: section.provider.clone(),
            });
        }
        let pricing = Pricing {
            input_cost_per_1k: section.input_cost_per_1k,
            output_cost_per_1k: section.output_cost_per_1k,
        };
        if !pricing.is_valid() {
            return Err(ConfigError::Invalid(format!("model {name:?} has negative pricing")));
        }
        Ok(ModelHandle {
            name: name.to_string(),
            provider: section.provider.clone(),
            model_id: section.model_id.clone(),
            pricing,
            supports_n: section.supports_n,
            supports_images: section.supports_images,
        })
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        let default = RetryPolicy::default();
        RetryPolicy {
            max_attempts: self.retry.max_attempts.unwrap_or(default.max_attempts),
            backoff: Backoff {
                initial: self
                    .retry
                    .initial_backoff_ms
                    .map(Duration::from_millis)
                    .unwrap_or(default.backoff.initial),
                multiplier: self
                    .retry
                    .backoff_multiplier
                    .unwrap_or(default.backoff.multiplier),
                max: self
                    .retry
                    .max_backoff_ms
                    .map(Duration::from_millis)
                    .unwrap_or(default.backoff.max),
            },
            retry_on: default.retry_on,
        }
    }

    pub fn clock(&self) -> Arc<dyn Clock> {
        if self.run.fixed_clock {
            Arc::new(FixedClock)
        } else {
            Arc::new(SystemClock::new())
        }
    }
}

/// Builds the gateway: one backend per provider, rate limits, retry policy,
/// and the response cache when a directory is configured.
pub fn build_gateway(
    config: &LoadedConfig,
    cache_dir: Option<&Path>,
    clock: Arc<dyn Clock>,
) -> Result<Gateway, ConfigError> {
    let doc = &config.document;
    let mut builder = Gateway::builder()
        .clock(clock)
        .retry_policy(doc.retry_policy());

    for (name, provider) in &doc.providers {
        match provider {
            ProviderSection::Openai {
                base_url,
                api_key_env,
                requests_per_minute,
                timeout_secs,
            } => {
                let api_key = std::env::var(api_key_env).ok();
                let backend =
                    HttpBackend::new(base_url, api_key, Duration::from_secs(*timeout_secs))
                        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
                builder = builder.provider(name, Arc::new(backend));
                if let Some(rpm) = requests_per_minute {
                    builder = builder.rate_limit(name, *rpm);
                }
            }
            ProviderSection::Mock { script } => {
                let path = config.base_dir.join(script);
                let mock = MockBackend::from_script_file(&path)
                    .map_err(|e| ConfigError::Invalid(e.to_string()))?;
                builder = builder.provider(name, Arc::new(mock));
            }
        }
    }

    let cache_dir = cache_dir.or(doc.run.cache_dir.as_deref());
    if let Some(dir) = cache_dir {
        let cache = DiskCache::open(dir).map_err(|e| ConfigError::Invalid(format!("cache: {e}")))?;
        builder = builder.cache(cache);
    }
    Ok(builder.build())
}

/// Resolves the run section against a dataset into an orchestrator config.
pub fn build_run_config(
    config: &LoadedConfig,
    dataset: &Dataset,
    task: TaskKind,
    schemas: SchemaSet,
) -> Result<RunConfig, ConfigError> {
    let doc = &config.document;
    let run = &doc.run;

    let peers = run
        .peers
        .iter()
        .map(|name| doc.model_handle(name))
        .collect::<Result<Vec<_>, _>>()?;
    let area_chair = doc.model_handle(&run.area_chair)?;

    let n = match run.variant {
        Variant::Lite => run.n.unwrap_or(1),
        Variant::Turbo => run.n.unwrap_or(20),
    };
    let strategy = run.strategy.unwrap_or(match task {
        TaskKind::Rating => CommunicationStrategy::ScoreOnly,
        TaskKind::Reasoning => CommunicationStrategy::Both,
    });
    let method = run.method.clone().unwrap_or_else(|| {
        match run.variant {
            Variant::Turbo => "refer-turbo",
            Variant::Lite => "refer-lite",
        }
        .to_string()
    });
    let defaults = HyperParams::defaults(task, dataset.kind);
    let hyper = HyperParams {
        peer: doc.hyperparameters.peer.apply(defaults.peer),
        area_chair: doc.hyperparameters.area_chair.apply(defaults.area_chair),
        auto_prompt: doc.hyperparameters.auto_prompt.apply(defaults.auto_prompt),
    };

    let cfg = RunConfig {
        method,
        min_peers: run.min_peers.unwrap_or(RunConfig::default_min_peers(peers.len())),
        peers,
        area_chair,
        variant: run.variant,
        n,
        strategy,
        schemas,
        task_kind: task,
        answer_space: dataset.answer_space.clone(),
        hyper,
        seed_tag: run.seed_tag.clone(),
        fail_fast: run.fail_fast,
    };
    cfg.validate().map_err(ConfigError::Invalid)?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
version = 1

[run]
variant = "lite"
peers = ["peer-a"]
area_chair = "ac"

[models.peer-a]
provider = "mock"
model_id = "peer-a-v1"

[models.ac]
provider = "mock"
model_id = "ac-v1"
supports_n = true

[providers.mock]
kind = "mock"
script = "scripts.toml"
"#;

    fn write_config(text: &str) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.toml");
        std::fs::write(&path, text).unwrap();
        std::fs::write(
            dir.path().join("scripts.toml"),
            "version = 1\n\n[[script]]\nany = true\ncompletions = [\"Analysis: ok.\\nRating: 2\"]\n",
        )
        .unwrap();
        (dir, path)
    }

    #[test]
    fn loads_minimal_config() {
        let (_dir, path) = write_config(MINIMAL);
        let config = load_config(&path, &[]).unwrap();
        assert_eq!(config.document.run.peers, vec!["peer-a"]);
        assert_eq!(config.document.run.concurrency, 4);
        let handle = config.document.model_handle("ac").unwrap();
        assert!(handle.supports_n);
        assert_eq!(handle.model_id, "ac-v1");
    }

    #[test]
    fn overrides_rewrite_the_document_last_wins() {
        let (_dir, path) = write_config(MINIMAL);
        let config = load_config(
            &path,
            &[
                "run.variant=turbo".into(),
                "run.n=4".into(),
                "run.n=8".into(),
                "models.ac.model_id=ac-v2".into(),
            ],
        )
        .unwrap();
        assert_eq!(config.document.run.variant, Variant::Turbo);
        assert_eq!(config.document.run.n, Some(8));
        assert_eq!(config.document.models["ac"].model_id, "ac-v2");
    }

    #[test]
    fn bad_overrides_are_rejected() {
        let (_dir, path) = write_config(MINIMAL);
        assert!(matches!(
            load_config(&path, &["no-equals".into()]),
            Err(ConfigError::BadOverride { .. })
        ));
        assert!(matches!(
            load_config(&path, &["version.x=1".into()]),
            Err(ConfigError::BadOverride { .. })
        ));
    }

    #[test]
    fn unknown_version_is_rejected() {
        let (_dir, path) = write_config(&MINIMAL.replace("version = 1", "version = 3"));
        assert!(matches!(
            load_config(&path, &[]),
            Err(ConfigError::UnknownVersion(3))
        ));
    }

    #[test]
    fn unknown_model_and_provider_are_named() {
        let (_dir, path) = write_config(MINIMAL);
        let config = load_config(&path, &[]).unwrap();
        assert!(matches!(
            config.document.model_handle("nope"),
            Err(ConfigError::UnknownModel(name)) if name == "nope"
        ));
        let config = load_config(&path, &["models.ac.provider=missing".into()]).unwrap();
        assert!(matches!(
            config.document.model_handle("ac"),
            Err(ConfigError::UnknownProvider { .. })
        ));
    }

    #[test]
    fn call_params_zero_max_tokens_means_unlimited() {
        let base = CallParams {
            temperature: 1.0,
            top_p: 1.0,
            max_tokens: Some(128),
        };
        let section = CallParamsSection {
            temperature: None,
            top_p: Some(0.9),
            max_tokens: Some(0),
        };
        let applied = section.apply(base);
        assert_eq!(applied.max_tokens, None);
        assert_eq!(applied.top_p, 0.9);
        assert_eq!(applied.temperature, 1.0);
    }
}
