//! Directory layout of a project root.

use std::path::{Path, PathBuf};

use skillforge_core::ownership::{REGISTRY_DIR, REPORTS_DIR, SITE_DIR, SKILLS_DIR, TESTS_DIR};
use skillforge_core::NodePath;

pub const SKILLS_FILE: &str = "skills.ndjson";
pub const RESOURCES_FILE: &str = "resources.ndjson";
pub const VERIFICATIONS_FILE: &str = "verifications.ndjson";
pub const NOVELTY_FILE: &str = "novelty.ndjson";
pub const SNAPSHOT_FILE: &str = "tree.snapshot";
pub const LOCK_FILE: &str = "LOCK";
pub const INDEX_DIR: &str = "index";
pub const TAXONOMY_FILE: &str = "taxonomy.txt";

/// Paths under one project root. Everything the engine writes lives here.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn join(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn registry_dir(&self) -> PathBuf {
        self.root.join(REGISTRY_DIR)
    }

    pub fn record_file(&self, name: &str) -> PathBuf {
        self.registry_dir().join(name)
    }

    pub fn snapshot(&self) -> PathBuf {
        self.registry_dir().join(SNAPSHOT_FILE)
    }

    pub fn index_dir(&self) -> PathBuf {
        self.registry_dir().join(INDEX_DIR)
    }

    pub fn lock(&self) -> PathBuf {
        self.registry_dir().join(LOCK_FILE)
    }

    pub fn skills_dir(&self) -> PathBuf {
        self.root.join(SKILLS_DIR)
    }

    pub fn leaf_skills_dir(&self, leaf: &NodePath) -> PathBuf {
        self.skills_dir().join(leaf.dir())
    }

    pub fn tests_dir(&self) -> PathBuf {
        self.root.join(TESTS_DIR)
    }

    pub fn site_dir(&self) -> PathBuf {
        self.root.join(SITE_DIR)
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.root.join(REPORTS_DIR)
    }

    /// Append-only log of cycle reports, one JSON document per line.
    pub fn cycle_log(&self) -> PathBuf {
        self.reports_dir().join("cycles.ndjson")
    }

    /// Append-only log of layer-2 evaluation batches.
    pub fn evaluation_log(&self) -> PathBuf {
        self.reports_dir().join("evaluations.ndjson")
    }

    pub fn campaign_dir(&self, id: &str) -> PathBuf {
        self.root.join("campaigns").join(id)
    }

    pub fn workspaces_dir(&self) -> PathBuf {
        self.root.join("workspaces")
    }

    pub fn sandbox_dir(&self) -> PathBuf {
        self.root.join("sandbox")
    }

    pub fn graveyard_dir(&self) -> PathBuf {
        self.root.join("graveyard")
    }

    pub fn designs_dir(&self) -> PathBuf {
        self.root.join("designs")
    }

    pub fn taxonomy(&self) -> PathBuf {
        self.root.join(TAXONOMY_FILE)
    }
}

/// Top-level entries covered by the shared-state digest. Reports, sandboxes,
/// workspaces, campaigns and the lock file are excluded.
pub const STATE_ENTRIES: [&str; 5] = [REGISTRY_DIR, SKILLS_DIR, TESTS_DIR, SITE_DIR, "graveyard"];
