//! Who may write a project-relative path: one leaf's worker, or only refresh.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::path::NodePath;

pub const SKILLS_DIR: &str = "skills";
pub const TESTS_DIR: &str = "tests";
pub const REGISTRY_DIR: &str = "registry";
pub const SITE_DIR: &str = "site";
pub const REPORTS_DIR: &str = "reports";

const REGISTRY_FILES: [&str; 6] = [
    "skills.ndjson",
    "resources.ndjson",
    "verifications.ndjson",
    "novelty.ndjson",
    "tree.snapshot",
    "LOCK",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefreshCategory {
    Registry,
    Site,
    Reports,
    TopLevelDocument,
    /// Anything else, including another leaf's directories.
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ownership {
    Leaf,
    Refresh(RefreshCategory),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PathEscape {
    #[error("path {0:?} is absolute")]
    Absolute(String),
    #[error("path {0:?} leaves its root")]
    Traversal(String),
    #[error("path {0:?} is empty")]
    Empty(String),
}

/// Normalizes a relative path to `/`-joined components, rejecting absolute
/// paths and any `..` component.
pub fn clean_relative(path: &str) -> Result<String, PathEscape> {
    if path.starts_with('/') || path.starts_with('\\') || path.get(1..2) == Some(":") {
        return Err(PathEscape::Absolute(path.to_string()));
    }
    let mut parts: Vec<&str> = Vec::new();
    for c in path.split(['/', '\\']) {
        match c {
            "" | "." => {}
            ".." => return Err(PathEscape::Traversal(path.to_string())),
            c => parts.push(c),
        }
    }
    if parts.is_empty() {
        return Err(PathEscape::Empty(path.to_string()));
    }
    Ok(parts.join("/"))
}

/// Directory prefixes a leaf's worker may write under.
pub fn leaf_prefixes(leaf: &NodePath) -> [String; 2] {
    let dir = leaf.dir();
    [
        alloc::format!("{}/{}/", SKILLS_DIR, dir),
        alloc::format!("{}/{}/", TESTS_DIR, dir),
    ]
}

/// Ownership of a clean relative path from the point of view of `leaf`.
pub fn classify(path: &str, leaf: &NodePath) -> Ownership {
    if leaf_prefixes(leaf).iter().any(|p| path.starts_with(p.as_str())) {
        return Ownership::Leaf;
    }
    let first = path.split('/').next().unwrap_or("");
    let file = path.rsplit('/').next().unwrap_or("");
    let category = if first == REGISTRY_DIR || REGISTRY_FILES.contains(&file) {
        RefreshCategory::Registry
    } else if first == SITE_DIR {
        RefreshCategory::Site
    } else if first == REPORTS_DIR {
        RefreshCategory::Reports
    } else if !path.contains('/') {
        RefreshCategory::TopLevelDocument
    } else {
        RefreshCategory::Other
    };
    Ownership::Refresh(category)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf() -> NodePath {
        "bio/single cell/annotation".parse().unwrap()
    }

    #[test]
    fn leaf_and_refresh_paths() {
        assert_eq!(classify("skills/bio/single-cell/annotation/x/SKILL.md", &leaf()), Ownership::Leaf);
        assert_eq!(classify("tests/bio/single-cell/annotation/t.sh", &leaf()), Ownership::Leaf);
        assert_eq!(
            classify("skills.ndjson", &leaf()),
            Ownership::Refresh(RefreshCategory::Registry)
        );
        assert_eq!(
            classify("README.md", &leaf()),
            Ownership::Refresh(RefreshCategory::TopLevelDocument)
        );
        assert_eq!(
            classify("site/stats.json", &leaf()),
            Ownership::Refresh(RefreshCategory::Site)
        );
        assert_eq!(
            classify("skills/bio/single-cell/annotation-2/x", &leaf()),
            Ownership::Refresh(RefreshCategory::Other)
        );
    }

    #[test]
    fn escapes_are_rejected() {
        assert_eq!(clean_relative("./scripts//run.sh").unwrap(), "scripts/run.sh");
        assert!(matches!(clean_relative("../../etc/x"), Err(PathEscape::Traversal(_))));
        assert!(matches!(clean_relative("/etc/x"), Err(PathEscape::Absolute(_))));
        assert!(matches!(clean_relative("a/../b"), Err(PathEscape::Traversal(_))));
    }
}
