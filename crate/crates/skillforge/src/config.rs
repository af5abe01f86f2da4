//! Engine configuration, read from a TOML document.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use skillforge_core::contract::DEFAULT_SMOKE_TIMEOUT_SECS;
use skillforge_core::stage::{EffortProfile, StageKind, StageModel};

use crate::fsutil::{self, FsError};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error(transparent)]
    Fs(#[from] FsError),
    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
    #[error("unknown stage {0:?} in effort overrides")]
    UnknownStage(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Budgets {
    /// Resources recorded per focus leaf per cycle.
    pub search_per_leaf: usize,
    /// Candidates built per focus leaf per cycle.
    pub candidates_per_leaf: usize,
    /// Execution attempts per skill, the first run included.
    pub repair_attempts: u32,
    pub optimize_rounds: u32,
    pub smoke_timeout_secs: u64,
    /// Focus leaves taken from the priority ranking.
    pub focus_leaves: usize,
}

impl Default for Budgets {
    fn default() -> Self {
        Self {
            search_per_leaf: 8,
            candidates_per_leaf: 3,
            repair_attempts: 3,
            optimize_rounds: 2,
            smoke_timeout_secs: DEFAULT_SMOKE_TIMEOUT_SECS,
            focus_leaves: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoveltyConfig {
    /// Catalog snapshot files, relative to the config file.
    pub catalogs: Vec<PathBuf>,
    pub limit: usize,
    /// Ask the provider for a second opinion on every verdict.
    pub consult_provider: bool,
}

impl Default for NoveltyConfig {
    fn default() -> Self {
        Self {
            catalogs: Vec::new(),
            limit: 5,
            consult_provider: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    /// Minimum mean margin over the baseline.
    pub threshold: f64,
    pub batch_size: usize,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            threshold: 0.05,
            batch_size: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchedulerConfig {
    pub partition: String,
    pub ntasks: u32,
    pub max_ntasks: u32,
    pub time_limit: String,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            partition: "desk".to_string(),
            ntasks: 1,
            max_ntasks: 4,
            time_limit: "00:05:00".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub budgets: Budgets,
    pub novelty: NoveltyConfig,
    pub evaluation: EvaluationConfig,
    pub scheduler: SchedulerConfig,
    /// Per-stage model and effort overrides, keyed by stage name.
    pub effort: BTreeMap<String, StageModel>,
    /// Consecutive failed phases before a campaign halts.
    pub halt_after_failures: u32,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Config {
    pub fn desk() -> Self {
        Self {
            halt_after_failures: 3,
            ..Self::default()
        }
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let mut cfg: Config = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        if cfg.halt_after_failures == 0 {
            cfg.halt_after_failures = 3;
        }
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.effort_profile()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::parse(&fsutil::read_to_string(path)?, path)
    }

    pub fn effort_profile(&self) -> Result<EffortProfile, ConfigError> {
        let mut overrides = BTreeMap::new();
        for (name, model) in &self.effort {
            let stage: StageKind = name.parse().map_err(|_| ConfigError::UnknownStage(name.clone()))?;
            overrides.insert(stage, model.clone());
        }
        Ok(EffortProfile::with_overrides(&overrides))
    }

    pub fn catalog_paths(&self) -> Vec<PathBuf> {
        self.novelty.catalogs.iter().map(|p| self.base_dir.join(p)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use skillforge_core::stage::Effort;

    #[test]
    fn partial_documents_fill_defaults() {
        let cfg = Config::parse(
            "[budgets]\nsearch_per_leaf = 5\n\n[effort.skill_build]\nmodel = \"m\"\neffort = \"low\"\n",
            Path::new("/x/c.toml"),
        )
        .unwrap();
        assert_eq!(cfg.budgets.search_per_leaf, 5);
        assert_eq!(cfg.budgets.repair_attempts, 3);
        assert_eq!(cfg.halt_after_failures, 3);
        assert_eq!(cfg.evaluation.threshold, 0.05);
        let p = cfg.effort_profile().unwrap();
        assert_eq!(p.get(StageKind::SkillBuild).effort, Effort::Low);
        assert!(Config::parse("[effort.nope]\nmodel=\"m\"\neffort=\"low\"\n", Path::new("c")).is_err());
    }
}
