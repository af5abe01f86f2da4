//! On-disk registry: append-only record files, the tree snapshot, compacted
//! indexes and the single-writer lock.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::thread;
use std::time::{Duration, Instant};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;
use skillforge_core::registry::{Receipt, RecordLine, RegistryError, SkillEntry};
use skillforge_core::taxonomy::{load_tree, render_taxonomy};
use skillforge_core::tree::TreeError;
use skillforge_core::{DomainTree, Library, LibraryError, Registry};

use crate::fsutil::{self, FsError};
use crate::layout::{
    Layout, NOVELTY_FILE, RESOURCES_FILE, SKILLS_FILE, SNAPSHOT_FILE, VERIFICATIONS_FILE,
};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error(transparent)]
    Fs(#[from] FsError),
    #[error("corrupt record at {}:{line}: {message}", file.display())]
    Corrupt {
        file: PathBuf,
        line: usize,
        message: String,
    },
    #[error("registry is locked by another writer ({})", .0.display())]
    LockHeld(PathBuf),
    #[error("{} is not an initialized project", .0.display())]
    NotInitialized(PathBuf),
    #[error("{} is already initialized", .0.display())]
    AlreadyInitialized(PathBuf),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Library(#[from] LibraryError),
}

/// What a writer does when the lock is already held.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LockMode {
    FailFast,
    Wait(Duration),
}

impl Default for LockMode {
    fn default() -> Self {
        LockMode::Wait(Duration::from_secs(30))
    }
}

/// Held while a process writes shared state. Released on drop.
#[derive(Debug)]
pub struct WriterLock {
    path: PathBuf,
}

impl WriterLock {
    pub fn acquire(layout: &Layout, mode: LockMode) -> Result<Self, StoreError> {
        let path = layout.lock();
        fsutil::create_dir_all(&layout.registry_dir())?;
        let deadline = match mode {
            LockMode::FailFast => None,
            LockMode::Wait(d) => Some(Instant::now() + d),
        };
        loop {
            match OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(mut f) => {
                    let _ = writeln!(f, "{}", std::process::id());
                    return Ok(Self { path });
                }
                Err(e) if e.kind() == io::ErrorKind::AlreadyExists => match deadline {
                    Some(t) if Instant::now() < t => thread::sleep(Duration::from_millis(5)),
                    _ => return Err(StoreError::LockHeld(path)),
                },
                Err(e) => return Err(FsError { path, source: e }.into()),
            }
        }
    }
}

impl Drop for WriterLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

const RECORD_FILES: [&str; 4] = [RESOURCES_FILE, SKILLS_FILE, VERIFICATIONS_FILE, NOVELTY_FILE];

fn file_for(line: &RecordLine) -> &'static str {
    match line {
        RecordLine::Skill(_) => SKILLS_FILE,
        RecordLine::Resource(_) => RESOURCES_FILE,
        RecordLine::Verification(_) => VERIFICATIONS_FILE,
        RecordLine::Novelty(_) => NOVELTY_FILE,
    }
}

pub fn encode_line(line: &RecordLine) -> String {
    let v = match line {
        RecordLine::Skill(e) => serde_json::to_string(e),
        RecordLine::Resource(e) => serde_json::to_string(e),
        RecordLine::Verification(e) => serde_json::to_string(e),
        RecordLine::Novelty(e) => serde_json::to_string(e),
    };
    v.expect("record types always serialize")
}

fn read_records<T: DeserializeOwned>(
    path: &Path,
    wrap: fn(T) -> RecordLine,
    out: &mut Vec<RecordLine>,
) -> Result<(), StoreError> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(()),
        Err(e) => return Err(fsutil::at(path)(e).into()),
    };
    if !text.is_empty() && !text.ends_with('\n') {
        let line = text.lines().count();
        return Err(StoreError::Corrupt {
            file: path.to_path_buf(),
            line,
            message: "truncated final record".to_string(),
        });
    }
    for (i, l) in text.lines().enumerate() {
        if l.trim().is_empty() {
            continue;
        }
        let rec: T = serde_json::from_str(l).map_err(|e| StoreError::Corrupt {
            file: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(wrap(rec));
    }
    Ok(())
}

/// Loads every record line. A missing directory yields an empty registry.
pub fn open_registry(layout: &Layout) -> Result<Registry, StoreError> {
    let dir = layout.registry_dir();
    let mut lines = Vec::new();
    read_records(&dir.join(RESOURCES_FILE), RecordLine::Resource, &mut lines)?;
    read_records(&dir.join(SKILLS_FILE), RecordLine::Skill, &mut lines)?;
    read_records(&dir.join(VERIFICATIONS_FILE), RecordLine::Verification, &mut lines)?;
    read_records(&dir.join(NOVELTY_FILE), RecordLine::Novelty, &mut lines)?;
    Ok(Registry::replay(lines)?)
}

pub fn read_tree(layout: &Layout) -> Result<DomainTree, StoreError> {
    let path = layout.snapshot();
    if !path.exists() {
        return Err(StoreError::NotInitialized(layout.root().to_path_buf()));
    }
    Ok(DomainTree::from_snapshot(&fsutil::read_to_string(&path)?)?)
}

/// Tree and registry as last committed. Takes no lock.
pub fn open_library(layout: &Layout) -> Result<Library, StoreError> {
    let tree = read_tree(layout)?;
    let registry = open_registry(layout)?;
    Ok(Library::new(tree, registry))
}

/// Creates a fresh project from a taxonomy document.
pub fn init_project(layout: &Layout, taxonomy: &str) -> Result<Library, StoreError> {
    if layout.snapshot().exists() {
        return Err(StoreError::AlreadyInitialized(layout.root().to_path_buf()));
    }
    let tree = load_tree(taxonomy)?;
    let lock = WriterLock::acquire(layout, LockMode::FailFast)?;
    for f in RECORD_FILES {
        let p = layout.record_file(f);
        if !p.exists() {
            fsutil::write_atomic(&p, b"")?;
        }
    }
    let mut lib = Library::new(tree, Registry::new());
    commit(layout, &lock, &mut lib)?;
    fsutil::write_atomic(&layout.taxonomy(), render_taxonomy(&lib.tree).as_bytes())?;
    Ok(lib)
}

/// Writes pending record lines, the tree snapshot and the indexes.
/// Callers prove they hold the writer lock by passing it. If any write
/// fails, record files are truncated back and the snapshot restored.
pub fn commit(layout: &Layout, _lock: &WriterLock, lib: &mut Library) -> Result<usize, StoreError> {
    let pending = lib.registry.drain_outbox();
    let mut by_file: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for line in &pending {
        by_file.entry(file_for(line)).or_default().push(encode_line(line));
    }
    let lengths: Vec<(PathBuf, Option<u64>)> = RECORD_FILES
        .iter()
        .map(|f| {
            let p = layout.record_file(f);
            let len = fs::metadata(&p).ok().map(|m| m.len());
            (p, len)
        })
        .collect();
    let snapshot = fs::read(layout.snapshot()).ok();
    let result = (|| -> Result<(), StoreError> {
        for (file, lines) in &by_file {
            fsutil::append_lines(&layout.record_file(file), lines)?;
        }
        fsutil::write_atomic(&layout.snapshot(), lib.tree.to_snapshot().as_bytes())?;
        write_index(layout, lib)
    })();
    if let Err(e) = result {
        for (path, len) in lengths {
            match len {
                Some(n) => {
                    if let Ok(f) = OpenOptions::new().write(true).open(&path) {
                        let _ = f.set_len(n);
                    }
                }
                None => {
                    let _ = fs::remove_file(&path);
                }
            }
        }
        if let Some(bytes) = snapshot {
            let _ = fsutil::write_atomic(&layout.snapshot(), &bytes);
        }
        return Err(e);
    }
    Ok(pending.len())
}

/// Appends pending record lines only; snapshot and indexes are untouched.
pub fn append_pending(layout: &Layout, _lock: &WriterLock, registry: &mut Registry) -> Result<usize, StoreError> {
    let pending = registry.drain_outbox();
    let mut by_file: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for line in &pending {
        by_file.entry(file_for(line)).or_default().push(encode_line(line));
    }
    for (file, lines) in &by_file {
        fsutil::append_lines(&layout.record_file(file), lines)?;
    }
    Ok(pending.len())
}

fn pretty<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("index values serialize");
    s.push('\n');
    s.into_bytes()
}

fn write_index(layout: &Layout, lib: &Library) -> Result<(), StoreError> {
    let dir = layout.index_dir();
    let skills: BTreeMap<&str, _> = lib
        .registry
        .skills()
        .map(|s| {
            (
                s.id.as_str(),
                json!({
                    "leaf_path": s.leaf_path,
                    "status": s.status,
                    "package_path": s.package_path,
                    "updated_cycle": s.updated_cycle,
                }),
            )
        })
        .collect();
    let resources: BTreeMap<&str, _> = lib
        .registry
        .resources()
        .map(|r| (r.id.as_str(), json!({"kind": r.kind, "locator": r.locator})))
        .collect();
    let leaves: BTreeMap<String, _> = lib
        .tree
        .leaves()
        .filter(|n| n.status.is_live())
        .map(|n| {
            (
                n.path.to_string(),
                json!({
                    "skills": n.linked_skills,
                    "resources": n.linked_resources,
                    "coverage": n.coverage_flag,
                }),
            )
        })
        .collect();
    fsutil::write_atomic(&dir.join("skills.json"), &pretty(&skills))?;
    fsutil::write_atomic(&dir.join("resources.json"), &pretty(&resources))?;
    fsutil::write_atomic(&dir.join("leaves.json"), &pretty(&leaves))?;
    Ok(())
}

/// Durable single upsert: lock, reload, apply, append, unlock.
pub fn upsert_skill(layout: &Layout, entry: SkillEntry, mode: LockMode) -> Result<Receipt, StoreError> {
    let lock = WriterLock::acquire(layout, mode)?;
    let mut registry = open_registry(layout)?;
    let receipt = registry.upsert_skill(entry)?;
    append_pending(layout, &lock, &mut registry)?;
    Ok(receipt)
}

/// Digest of the registry directory, excluding the lock and the snapshot.
pub fn registry_digest(layout: &Layout) -> Result<String, StoreError> {
    Ok(fsutil::dir_digest(&layout.registry_dir(), |rel| {
        rel != crate::layout::LOCK_FILE && rel != SNAPSHOT_FILE && !rel.starts_with('.')
    })?)
}

/// Digest of every shared-state entry of the project.
pub fn state_digest(layout: &Layout) -> Result<String, StoreError> {
    let mut d = skillforge_core::digest::Digester::new();
    for entry in crate::layout::STATE_ENTRIES {
        let dir = layout.join(entry);
        let sub = fsutil::dir_digest(&dir, |rel| rel != crate::layout::LOCK_FILE && !rel.starts_with('.'))?;
        d.entry(entry, sub.as_bytes());
    }
    Ok(d.finish_hex())
}
