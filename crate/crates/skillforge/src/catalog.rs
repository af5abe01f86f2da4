//! Catalog views for novelty review: external snapshot files and the local
//! library rendered through the same entry shape.

use std::path::{Path, PathBuf};

use skillforge_core::contract::{scope_summary, SkillContract};
use skillforge_core::novelty::{Catalog, CatalogEntry, LOCAL_CATALOG};
use skillforge_core::registry::SkillEntry;
use skillforge_core::Registry;

use crate::fsutil::{self, FsError};

#[derive(Debug, thiserror::Error)]
pub enum CatalogError {
    #[error("unreadable catalog snapshot: {0}")]
    Fs(#[from] FsError),
    #[error("{}:{line}: {message}", path.display())]
    Record { path: PathBuf, line: usize, message: String },
}

/// Reads a newline-delimited snapshot. The catalog id is the file stem.
pub fn load_catalog(path: &Path) -> Result<Catalog, CatalogError> {
    let text = fsutil::read_to_string(path)?;
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: CatalogEntry = serde_json::from_str(line).map_err(|e| CatalogError::Record {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        entries.push(entry);
    }
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "external".to_string());
    Ok(Catalog { id, entries })
}

pub fn load_catalogs(paths: &[PathBuf]) -> Result<Vec<Catalog>, CatalogError> {
    paths.iter().map(|p| load_catalog(p)).collect()
}

/// The entry a skill presents to catalog search.
pub fn entry_for(skill: &SkillEntry, contract: &SkillContract, registry: &Registry) -> CatalogEntry {
    CatalogEntry {
        entry_ref: skill.id.clone(),
        task_description: contract.task_scope.clone(),
        scope_summary: scope_summary(contract),
        topic_path: Some(skill.leaf_path.to_string()),
        provenance: skill
            .provenance
            .iter()
            .map(|id| registry.resource(id).map(|r| r.locator.clone()).unwrap_or_else(|| id.clone()))
            .collect(),
    }
}

/// Every live skill whose contract `contract_of` can supply, in id order.
pub fn local_catalog<F>(registry: &Registry, mut contract_of: F) -> Catalog
where
    F: FnMut(&SkillEntry) -> Option<SkillContract>,
{
    let entries = registry
        .skills()
        .filter(|s| s.status.is_live())
        .filter_map(|s| contract_of(s).map(|c| entry_for(s, &c, registry)))
        .collect();
    Catalog {
        id: LOCAL_CATALOG.to_string(),
        entries,
    }
}
