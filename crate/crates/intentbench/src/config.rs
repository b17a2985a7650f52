//! Harness configuration file: backend endpoints, template names, decoding
//! and retry knobs.
//!
//! The file is TOML. Endpoints and capability flags live under
//! `[backends.<id>]`; secrets never appear in the file, only the names of
//! environment variables holding them. Relative paths resolve against the
//! config file's directory. See the README for the full key reference.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

use crate::backend::http::{HttpBackendConfig, OpenAiChatBackend, OpenAiEmbeddingBackend};
use crate::backend::mock::{MockChatBackend, MockEmbedder};
use crate::backend::BackendError;
use crate::runner::BackendRegistry;
use crate::types::{DecodingParams, RetryPolicy, RunConfig, RunMode, SelectionMode, TemplateConfig};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("backend setup failed: {0}")]
    Backend(#[from] BackendError),
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub mode: Option<String>,
    pub k_candidates: Option<usize>,
    pub frames_per_video: Option<usize>,
    pub proposer_backend: Option<String>,
    pub selector_backend: Option<String>,
    pub embedder_backend: Option<String>,
    pub selection_mode: Option<String>,
    pub cache_dir: Option<PathBuf>,
    pub max_in_flight: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplatesSection {
    pub propose: Option<String>,
    pub select: Option<String>,
    pub direct: Option<String>,
    pub dir: Option<PathBuf>,
}

/// One `[backends.<id>]` entry.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum BackendSpec {
    /// Scripted offline chat backend.
    #[serde(rename = "mock-chat")]
    MockChat {
        /// JSON file holding the full mock definition (fixtures, defaults,
        /// choice logprobs). Inline fields below are used when absent.
        fixtures_file: Option<PathBuf>,
        #[serde(default)]
        fixtures: BTreeMap<String, String>,
        default_response: Option<String>,
        #[serde(default)]
        strict: bool,
    },
    /// OpenAI-compatible chat endpoint.
    #[serde(rename = "openai-chat")]
    OpenAiChat {
        base_url: String,
        model_id: String,
        api_key_env: Option<String>,
        #[serde(default)]
        supports_logprobs: bool,
    },
    /// Deterministic hash embedder.
    #[serde(rename = "mock-embed")]
    MockEmbed {
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default = "default_seed")]
        seed: u64,
    },
    /// OpenAI-compatible embeddings endpoint.
    #[serde(rename = "openai-embed")]
    OpenAiEmbed {
        base_url: String,
        model_id: String,
        api_key_env: Option<String>,
    },
}

fn default_dim() -> usize {
    32
}

fn default_seed() -> u64 {
    7
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarnessConfig {
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub templates: TemplatesSection,
    #[serde(default)]
    pub decoding: Option<DecodingParams>,
    #[serde(default)]
    pub retry: Option<RetryPolicy>,
    #[serde(default)]
    pub backends: BTreeMap<String, BackendSpec>,
}

pub fn parse_mode(s: &str) -> Result<RunMode, ConfigError> {
    match s {
        "closed" | "closed_choice" | "closed-choice" => Ok(RunMode::ClosedChoice),
        "open-direct" | "open_direct" => Ok(RunMode::OpenDirect),
        "open-2step" | "open_two_step" | "open-two-step" => Ok(RunMode::OpenTwoStep),
        other => Err(ConfigError::Invalid(format!(
            "unknown mode {other:?} (expected closed, open-direct or open-2step)"
        ))),
    }
}

fn parse_selection_mode(s: &str) -> Result<SelectionMode, ConfigError> {
    match s {
        "generative_label" | "generative" => Ok(SelectionMode::GenerativeLabel),
        "likelihood" => Ok(SelectionMode::Likelihood),
        other => Err(ConfigError::Invalid(format!(
            "unknown selection_mode {other:?} (expected generative_label or likelihood)"
        ))),
    }
}

impl HarnessConfig {
    /// Parses a TOML config file; relative paths inside resolve against its
    /// directory.
    pub fn load(path: &Path) -> Result<HarnessConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut config: HarnessConfig =
            toml::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        if let Some(dir) = path.parent() {
            config.anchor_paths(dir);
        }
        Ok(config)
    }

    fn anchor_paths(&mut self, dir: &Path) {
        let anchor = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        if let Some(p) = &mut self.run.cache_dir {
            anchor(p);
        }
        if let Some(p) = &mut self.templates.dir {
            anchor(p);
        }
        for spec in self.backends.values_mut() {
            if let BackendSpec::MockChat { fixtures_file: Some(p), .. } = spec {
                anchor(p);
            }
        }
    }

    /// Resolves the effective run configuration; `mode_override` is the CLI
    /// flag and wins over the file.
    pub fn run_config(&self, mode_override: Option<&str>) -> Result<RunConfig, ConfigError> {
        let mode_str = mode_override
            .map(str::to_string)
            .or_else(|| self.run.mode.clone())
            .ok_or_else(|| {
                ConfigError::Invalid("no mode given (set run.mode or pass --mode)".into())
            })?;
        let mut cfg = RunConfig::new(parse_mode(&mode_str)?);
        if let Some(k) = self.run.k_candidates {
            cfg.k_candidates = k;
        }
        if let Some(f) = self.run.frames_per_video {
            cfg.frames_per_video = f;
        }
        if let Some(b) = &self.run.proposer_backend {
            cfg.proposer_backend = b.clone();
        }
        if let Some(b) = &self.run.selector_backend {
            cfg.selector_backend = b.clone();
        }
        if let Some(b) = &self.run.embedder_backend {
            cfg.embedder_backend = b.clone();
        }
        if let Some(s) = &self.run.selection_mode {
            cfg.selection_mode = parse_selection_mode(s)?;
        }
        if let Some(dir) = &self.run.cache_dir {
            cfg.cache_dir = dir.clone();
        }
        if let Some(n) = self.run.max_in_flight {
            cfg.max_in_flight = n;
        }
        if let Some(d) = &self.decoding {
            cfg.decoding = d.clone();
        }
        if let Some(r) = &self.retry {
            cfg.retry = r.clone();
        }
        cfg.templates = TemplateConfig {
            propose: self.templates.propose.clone().unwrap_or_else(|| "propose_default".into()),
            select: self.templates.select.clone().unwrap_or_else(|| "select_default".into()),
            direct: self.templates.direct.clone().unwrap_or_else(|| "direct_default".into()),
            dir: self.templates.dir.clone(),
        };
        cfg.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(cfg)
    }

    /// Instantiates every configured backend.
    pub fn build_registry(&self) -> Result<BackendRegistry, ConfigError> {
        let retry = self.retry.clone().unwrap_or_default();
        let mut registry = BackendRegistry::new();
        for (id, spec) in &self.backends {
            match spec {
                BackendSpec::MockChat { fixtures_file, fixtures, default_response, strict } => {
                    let mut mock = match fixtures_file {
                        Some(path) => {
                            let text =
                                std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
                                    path: path.display().to_string(),
                                    source,
                                })?;
                            serde_json::from_str::<MockChatBackend>(&text)
                                .map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))?
                        }
                        None => {
                            let mut mock = MockChatBackend::default();
                            mock.fixtures = fixtures.clone();
                            mock.strict = *strict;
                            mock.default_response = default_response.clone();
                            mock
                        }
                    };
                    mock.id = id.clone();
                    registry.insert_chat(id.clone(), Arc::new(mock));
                }
                BackendSpec::OpenAiChat { base_url, model_id, api_key_env, supports_logprobs } => {
                    let backend = OpenAiChatBackend::new(
                        id.clone(),
                        HttpBackendConfig {
                            base_url: base_url.clone(),
                            model_id: model_id.clone(),
                            api_key_env: api_key_env.clone(),
                            supports_logprobs: *supports_logprobs,
                            retry: retry.clone(),
                        },
                    )?;
                    registry.insert_chat(id.clone(), Arc::new(backend));
                }
                BackendSpec::MockEmbed { dim, seed } => {
                    let mut embedder = MockEmbedder::new(*dim, *seed);
                    embedder.id = id.clone();
                    registry.insert_embed(id.clone(), Arc::new(embedder));
                }
                BackendSpec::OpenAiEmbed { base_url, model_id, api_key_env } => {
                    let backend = OpenAiEmbeddingBackend::new(
                        id.clone(),
                        HttpBackendConfig {
                            base_url: base_url.clone(),
                            model_id: model_id.clone(),
                            api_key_env: api_key_env.clone(),
                            supports_logprobs: false,
                            retry: retry.clone(),
                        },
                    )?;
                    registry.insert_embed(id.clone(), Arc::new(backend));
                }
            }
        }
        Ok(registry)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
[run]
mode = "closed_choice"
k_candidates = 5
selector_backend = "mock-sel"
embedder_backend = "embed"
cache_dir = "cache"

[templates]
select = "select_default"

[decoding]
temperature = 0.2
max_tokens = 64

[retry]
max_retries = 2
base_delay_ms = 10
factor = 2.0
timeout_s = 30

[backends.mock-sel]
kind = "mock-chat"
default_response = "A"

[backends.embed]
kind = "mock-embed"
dim = 16
seed = 3

[backends.remote]
kind = "openai-chat"
base_url = "http://localhost:9999/v1"
model_id = "vlm"
supports_logprobs = true
"#;

    #[test]
    fn config_round_trips_into_run_config_and_registry() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.toml");
        std::fs::write(&path, SAMPLE).unwrap();
        let config = HarnessConfig::load(&path).unwrap();

        let cfg = config.run_config(None).unwrap();
        assert_eq!(cfg.mode, RunMode::ClosedChoice);
        assert_eq!(cfg.selector_backend, "mock-sel");
        assert_eq!(cfg.decoding.temperature, 0.2);
        assert_eq!(cfg.retry.max_retries, 2);
        assert!(cfg.cache_dir.starts_with(dir.path()), "cache_dir anchored to config dir");

        let registry = config.build_registry().unwrap();
        assert!(registry.chat("mock-sel").is_ok());
        assert!(registry.chat("remote").is_ok());
        assert!(registry.embed("embed").is_ok());
        assert!(registry.chat("absent").is_err());
    }

    #[test]
    fn cli_mode_overrides_file_mode() {
        let config: HarnessConfig = toml::from_str("[run]\nmode = \"closed_choice\"\n").unwrap();
        let cfg = config.run_config(Some("open-2step")).unwrap();
        assert_eq!(cfg.mode, RunMode::OpenTwoStep);
    }

    #[test]
    fn missing_mode_is_an_error() {
        let config = HarnessConfig::default();
        assert!(matches!(config.run_config(None), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = toml::from_str::<HarnessConfig>("[run]\nmoed = \"closed\"\n").unwrap_err();
        assert!(err.to_string().contains("moed"));
    }

    #[test]
    fn fixtures_file_defines_the_mock() {
        let dir = tempfile::tempdir().unwrap();
        let fixtures = dir.path().join("fixtures.json");
        std::fs::write(
            &fixtures,
            r#"{"fixtures": {"q1": "B"}, "default_response": "A", "strict": false}"#,
        )
        .unwrap();
        let toml_text = format!(
            "[backends.m]\nkind = \"mock-chat\"\nfixtures_file = \"{}\"\n",
            fixtures.file_name().unwrap().to_str().unwrap()
        );
        let path = dir.path().join("config.toml");
        std::fs::write(&path, toml_text).unwrap();
        let config = HarnessConfig::load(&path).unwrap();
        let registry = config.build_registry().unwrap();
        let backend = registry.chat("m").unwrap();
        let req = crate::backend::BackendRequest::new(
            "m",
            vec![crate::backend::ChatMessage::user(vec![
                crate::backend::MessagePart::Text("about q1 then".into()),
            ])],
        );
        assert_eq!(backend.complete(&req).unwrap().text, "B");
    }

    #[test]
    fn bad_selection_mode_is_an_error() {
        let config: HarnessConfig =
            toml::from_str("[run]\nmode = \"closed\"\nselection_mode = \"votes\"\n").unwrap();
        assert!(matches!(config.run_config(None), Err(ConfigError::Invalid(_))));
    }
}
