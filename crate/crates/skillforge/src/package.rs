//! Skill packages on disk: compile, load, lint and edit.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use skillforge_core::contract::{
    invariant_findings, parse_contract, render_metadata, render_spec_document, spec_divergences, tokenize,
    ContractError, SkillContract,
};
use skillforge_core::ownership::{clean_relative, PathEscape};
use skillforge_core::stage::FileWrite;

use crate::fsutil::{self, FsError};

pub const SPEC_DOC: &str = "SKILL.md";
pub const METADATA_DOC: &str = "skill.json";
pub const PROVENANCE_DOC: &str = "PROVENANCE.md";
pub const SCRIPTS_DIR: &str = "scripts";
pub const EXAMPLES_DIR: &str = "examples";
pub const TESTS_DIR: &str = "tests";

/// Subdirectories a repair or optimize edit may touch.
pub const EDITABLE_DIRS: [&str; 3] = [SCRIPTS_DIR, EXAMPLES_DIR, TESTS_DIR];

#[derive(Debug, thiserror::Error)]
pub enum PackageError {
    #[error("path escape: {0}")]
    Escape(#[from] PathEscape),
    #[error("{0} is reserved for package documents")]
    Reserved(String),
    #[error("{0} is outside the editable package directories")]
    NotEditable(String),
    #[error(transparent)]
    Fs(#[from] FsError),
    #[error("spec and metadata diverge: {}", .0.join("; "))]
    Divergence(Vec<String>),
    #[error("{}: unreadable metadata: {message}", path.display())]
    Metadata { path: PathBuf, message: String },
    #[error(transparent)]
    Contract(#[from] ContractError),
}

/// A compiled package. Paths are relative to `root_path`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillPackage {
    pub root_path: PathBuf,
    pub spec_document: String,
    pub metadata_document: String,
    pub provenance_document: String,
    pub scripts: Vec<String>,
    pub examples: Vec<String>,
    pub tests: Vec<String>,
}

impl SkillPackage {
    fn scan(root: &Path) -> Self {
        let files = fsutil::list_files(root);
        let under = |dir: &str| -> Vec<String> {
            let prefix = format!("{}/", dir);
            files.iter().filter(|f| f.starts_with(&prefix)).cloned().collect()
        };
        Self {
            root_path: root.to_path_buf(),
            spec_document: SPEC_DOC.to_string(),
            metadata_document: METADATA_DOC.to_string(),
            provenance_document: PROVENANCE_DOC.to_string(),
            scripts: under(SCRIPTS_DIR),
            examples: under(EXAMPLES_DIR),
            tests: under(TESTS_DIR),
        }
    }
}

fn render_provenance(name: &str, contract: &SkillContract) -> String {
    let mut out = format!("# Provenance of {}\n\n", name);
    for link in &contract.provenance_links {
        out.push_str(&format!("- {}\n", link));
    }
    out
}

fn check_artifact_path(path: &str) -> Result<String, PackageError> {
    let clean = clean_relative(path)?;
    if [SPEC_DOC, METADATA_DOC, PROVENANCE_DOC].contains(&clean.as_str()) {
        return Err(PackageError::Reserved(clean));
    }
    Ok(clean)
}

fn write_file(root: &Path, rel: &str, content: &[u8]) -> Result<(), PackageError> {
    let path = root.join(rel);
    fsutil::write_atomic(&path, content)?;
    fsutil::set_executable(&path, rel.starts_with("scripts/"))?;
    Ok(())
}

/// Lays a package out under `dest_root`, replacing whatever was there.
/// The same inputs always give byte-identical output.
pub fn compile_package(
    name: &str,
    contract: &SkillContract,
    artifacts: &[FileWrite],
    dest_root: &Path,
) -> Result<SkillPackage, PackageError> {
    let checked: Vec<(String, &str)> = artifacts
        .iter()
        .map(|a| Ok((check_artifact_path(&a.path)?, a.content.as_str())))
        .collect::<Result<_, PackageError>>()?;
    let spec = render_spec_document(name, contract);
    let divergences = spec_divergences(&spec, contract);
    if !divergences.is_empty() {
        return Err(PackageError::Divergence(divergences));
    }
    fsutil::remove_dir_if_exists(dest_root)?;
    fsutil::create_dir_all(dest_root)?;
    write_file(dest_root, SPEC_DOC, spec.as_bytes())?;
    write_file(dest_root, METADATA_DOC, render_metadata(contract).as_bytes())?;
    write_file(dest_root, PROVENANCE_DOC, render_provenance(name, contract).as_bytes())?;
    for (rel, content) in checked {
        write_file(dest_root, &rel, content.as_bytes())?;
    }
    Ok(SkillPackage::scan(dest_root))
}

pub fn read_contract(root: &Path) -> Result<SkillContract, PackageError> {
    let path = root.join(METADATA_DOC);
    let text = fsutil::read_to_string(&path)?;
    let doc: serde_json::Value = serde_json::from_str(&text).map_err(|e| PackageError::Metadata {
        path: path.clone(),
        message: e.to_string(),
    })?;
    Ok(parse_contract(&doc)?)
}

pub fn load_package(root: &Path) -> Result<(SkillPackage, SkillContract), PackageError> {
    let contract = read_contract(root)?;
    Ok((SkillPackage::scan(root), contract))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FindingKind {
    MissingFile,
    Metadata,
    Divergence,
    NotExecutable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub kind: FindingKind,
    pub path: String,
    pub message: String,
}

fn finding(kind: FindingKind, path: &str, message: impl Into<String>) -> Finding {
    Finding {
        kind,
        path: path.to_string(),
        message: message.into(),
    }
}

/// Package-relative files named by the contract's commands.
fn referenced_files(contract: &SkillContract) -> Vec<String> {
    let mut out = Vec::new();
    for cmd in contract.example_invocations.iter().chain(&contract.test_commands) {
        for token in tokenize(cmd).unwrap_or_default() {
            if EDITABLE_DIRS.iter().any(|d| token.starts_with(&format!("{}/", d))) {
                if let Ok(clean) = clean_relative(&token) {
                    if !out.contains(&clean) {
                        out.push(clean);
                    }
                }
            }
        }
    }
    out
}

/// Empty iff the documents exist and agree, every referenced file exists and
/// every script is executable.
pub fn lint_package(root: &Path) -> Vec<Finding> {
    let mut out = Vec::new();
    for doc in [SPEC_DOC, METADATA_DOC, PROVENANCE_DOC] {
        if !root.join(doc).is_file() {
            out.push(finding(FindingKind::MissingFile, doc, "required document is missing"));
        }
    }
    let contract = match read_contract(root) {
        Ok(c) => Some(c),
        Err(PackageError::Fs(_)) => None,
        Err(e) => {
            out.push(finding(FindingKind::Metadata, METADATA_DOC, e.to_string()));
            None
        }
    };
    if let Some(c) = &contract {
        if let Ok(spec) = fs::read_to_string(root.join(SPEC_DOC)) {
            for d in spec_divergences(&spec, c) {
                out.push(finding(FindingKind::Divergence, SPEC_DOC, d));
            }
        }
        for rel in referenced_files(c) {
            if !root.join(&rel).is_file() {
                out.push(finding(FindingKind::MissingFile, &rel, "referenced by a command but absent"));
            }
        }
    }
    for rel in SkillPackage::scan(root).scripts {
        if !fsutil::is_executable(&root.join(&rel)) {
            out.push(finding(FindingKind::NotExecutable, &rel, "script lacks the executable bit"));
        }
    }
    out
}

/// Advisory notes that do not fail the lint: missing tests, unused inputs.
pub fn lint_notes(contract: &SkillContract) -> Vec<String> {
    let mut notes = invariant_findings(contract);
    if contract.test_commands.is_empty() {
        notes.push("missing-tests: no test command declared".to_string());
    }
    notes
}

/// Applies whole-file edits inside the editable directories. Every edit is
/// checked before any is written.
pub fn apply_edits(root: &Path, edits: &[FileWrite]) -> Result<Vec<String>, PackageError> {
    let mut checked = Vec::with_capacity(edits.len());
    for e in edits {
        let clean = clean_relative(&e.path)?;
        if !EDITABLE_DIRS.iter().any(|d| clean.starts_with(&format!("{}/", d))) {
            return Err(PackageError::NotEditable(clean));
        }
        checked.push((clean, e.content.as_bytes()));
    }
    for (rel, content) in &checked {
        write_file(root, rel, content)?;
    }
    Ok(checked.into_iter().map(|(r, _)| r).collect())
}

pub fn package_digest(root: &Path) -> Result<String, PackageError> {
    Ok(fsutil::dir_digest(root, |_| true)?)
}
