use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::embedding::ProviderConfig;
use crate::error::{Error, Result};
use crate::graph::{LeidenParams, MIN_COMMUNITY_MEMBERS};
use crate::llm::LlmConfig;
use crate::pipeline::{PipelineConfig, PromptTemplates};
use crate::stats::AnalysisParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphConfig {
    pub leiden: LeidenParams,
    /// Communities smaller than this get no summary node.
    pub min_members: usize,
    pub max_in_flight: usize,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            leiden: LeidenParams::default(),
            min_members: MIN_COMMUNITY_MEMBERS,
            max_in_flight: 4,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptConfig {
    pub system_file: Option<PathBuf>,
    pub user_file: Option<PathBuf>,
}

impl PromptConfig {
    pub fn templates(&self) -> Result<PromptTemplates> {
        let defaults = PromptTemplates::default();
        let read = |p: &Path| {
            std::fs::read_to_string(p)
                .map(|s| s.trim_end().to_string())
                .map_err(|e| Error::io(format!("reading template {}", p.display()), e))
        };
        let system = match &self.system_file {
            Some(p) => read(p)?,
            None => defaults.system,
        };
        let user = match &self.user_file {
            Some(p) => read(p)?,
            None => defaults.user,
        };
        PromptTemplates::new(system, user)
    }
}

/// Offline providers: hashed bag-of-tokens embeddings and the echo chat model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockConfig {
    pub enabled: bool,
    pub dimension: usize,
    pub seed: u64,
    /// Seed of the separate embedder used for D_i and V_i.
    pub metric_seed: u64,
}

impl Default for MockConfig {
    fn default() -> Self {
        MockConfig {
            enabled: false,
            dimension: 1024,
            seed: 0,
            metric_seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub embedding: ProviderConfig,
    pub metric_embedding: ProviderConfig,
    pub llm: LlmConfig,
    pub pipeline: PipelineConfig,
    pub graph: GraphConfig,
    pub analysis: AnalysisParams,
    pub prompts: PromptConfig,
    pub mock: MockConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            embedding: ProviderConfig::default(),
            metric_embedding: ProviderConfig {
                model: "thenlper/gte-large".into(),
                instruction: String::new(),
                dimension: 1024,
                ..ProviderConfig::default()
            },
            llm: LlmConfig::default(),
            pipeline: PipelineConfig::default(),
            graph: GraphConfig::default(),
            analysis: AnalysisParams::default(),
            prompts: PromptConfig::default(),
            mock: MockConfig::default(),
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidInput(format!("config: {e}")))
    }

    /// Reads `path`; relative prompt paths resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading config {}", path.display()), e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.prompts.system_file, &mut cfg.prompts.user_file].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::InvalidInput(format!("config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        self.pipeline.validate()?;
        if !self.mock.enabled {
            self.embedding.validate()?;
            self.metric_embedding.validate()?;
        } else if self.mock.dimension < 2 {
            return Err(Error::InvalidInput("mock dimension must be >= 2".into()));
        }
        self.prompts.templates()?;
        Ok(())
    }
}
