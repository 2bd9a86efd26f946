use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EdgeLabelMode {
    /// Use a direct ontology relation when both terms resolve, else ask the model.
    #[default]
    OntologyFirst,
    ModelOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum VotePool {
    /// One vote over every candidate of the layer.
    #[default]
    Layer,
    /// One vote per parent branch, each contributing its top pick.
    PerBranch,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
}

/// Parameters of one graph generation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Number of layers, including the initial one.
    pub depth: usize,
    /// Candidates generated by the initial expansion.
    pub initial_branch: usize,
    /// Children generated per selected node.
    pub branch: usize,
    /// Candidates kept per layer.
    pub beam: usize,
    pub temperature: f64,
    pub model: String,
    /// Re-asks allowed after an unparseable reply.
    pub vote_retries: usize,
    pub edge_label_mode: EdgeLabelMode,
    pub vote_pool: VotePool,
    /// Few-shot exemplars per relation in edge-label prompts.
    pub relation_examples: usize,
    pub max_tokens: Option<u32>,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            depth: 5,
            initial_branch: 3,
            branch: 2,
            beam: 2,
            temperature: 0.7,
            model: "gpt-4-1106-preview".to_string(),
            vote_retries: 2,
            edge_label_mode: EdgeLabelMode::OntologyFirst,
            vote_pool: VotePool::Layer,
            relation_examples: 2,
            max_tokens: None,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.depth < 2 {
            return bad("depth must be at least 2");
        }
        if self.initial_branch == 0 || self.branch == 0 || self.beam == 0 {
            return bad("initial_branch, branch and beam must be positive");
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return bad("temperature must lie in [0, 2]");
        }
        if self.model.trim().is_empty() {
            return bad("model must be nonempty");
        }
        if self.max_tokens == Some(0) {
            return bad("max_tokens must be positive");
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    /// Population of each layer for a run that completes without shortfalls.
    pub fn expected_layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.initial_branch];
        for _ in 1..self.depth {
            let prev = *sizes.last().unwrap();
            sizes.push(prev.min(self.beam) * self.branch);
        }
        sizes
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_published_schedule() {
        let cfg = RunConfig::default();
        assert_eq!((cfg.depth, cfg.initial_branch, cfg.branch, cfg.beam), (5, 3, 2, 2));
        assert_eq!(cfg.temperature, 0.7);
        assert_eq!(cfg.expected_layer_sizes(), vec![3, 4, 4, 4, 4]);
    }

    #[test]
    fn toml_round_trip() {
        let cfg = RunConfig {
            depth: 3,
            max_tokens: Some(128),
            ..RunConfig::default()
        };
        assert_eq!(RunConfig::from_toml_str(&cfg.to_toml_string()).unwrap(), cfg);
        let d = RunConfig::default();
        assert_eq!(RunConfig::from_toml_str(&d.to_toml_string()).unwrap(), d);
    }

    #[test]
    fn partial_toml_keeps_defaults() {
        let cfg = RunConfig::from_toml_str("depth = 3\nedge_label_mode = \"model_only\"\n").unwrap();
        assert_eq!(cfg.depth, 3);
        assert_eq!(cfg.beam, 2);
        assert_eq!(cfg.edge_label_mode, EdgeLabelMode::ModelOnly);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(RunConfig::from_toml_str("depth = 1").is_err());
        assert!(RunConfig::from_toml_str("temperature = 3.0").is_err());
        assert!(RunConfig::from_toml_str("nonsense = 1").is_err());
    }
}
