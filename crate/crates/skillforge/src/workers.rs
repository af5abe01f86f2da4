//! Per-leaf worker workspaces, artifact collection and deterministic merge.
//!
//! A workspace is a copy of one leaf's `skills/` and `tests/` subtrees plus
//! read-only copies of the shared registry files, under
//! `workspaces/<leaf-slug>/`. Its base manifest sits next to it in
//! `workspaces/<leaf-slug>.json`.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::thread;

use serde::{Deserialize, Serialize};
use skillforge_core::ownership::{classify, Ownership, SKILLS_DIR, TESTS_DIR};
use skillforge_core::stage::{LeafStagePayload, StageResponse};
use skillforge_core::{DomainTree, NodePath};

use crate::fsutil::{self, FsError};
use crate::layout::{Layout, TAXONOMY_FILE};
use crate::store::{state_digest, StoreError};

#[derive(Debug, thiserror::Error)]
pub enum WorkerError {
    #[error(transparent)]
    Fs(#[from] FsError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("a workspace for {0} is already open")]
    DuplicateWorkspace(NodePath),
    #[error("{0} is not an active leaf")]
    InactiveLeaf(NodePath),
    #[error("workspace for {0} is not open")]
    NotOpen(NodePath),
    #[error("worker for {leaf} wrote refresh-owned paths: {}", paths.join(", "))]
    SharedFileWrite { leaf: NodePath, paths: Vec<String> },
    #[error("worker for {leaf} returned an unusable response: {message}")]
    UnparseableResponse { leaf: NodePath, message: String },
    #[error("internal invariant broken: {path} written by both {first} and {second}")]
    CrossSetCollision {
        path: String,
        first: NodePath,
        second: NodePath,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkspaceStatus {
    Open,
    Collected,
    Discarded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct WorkspaceRecord {
    leaf_path: NodePath,
    base_snapshot_digest: String,
    status: WorkspaceStatus,
    base_manifest: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Workspace {
    pub leaf_path: NodePath,
    pub isolated_root: PathBuf,
    pub base_snapshot_digest: String,
    pub status: WorkspaceStatus,
    base_manifest: BTreeMap<String, String>,
}

fn record_path(layout: &Layout, leaf: &NodePath) -> PathBuf {
    layout.workspaces_dir().join(format!("{}.json", leaf.slug()))
}

fn workspace_root(layout: &Layout, leaf: &NodePath) -> PathBuf {
    layout.workspaces_dir().join(leaf.slug())
}

impl Workspace {
    fn persist(&self, layout: &Layout) -> Result<(), WorkerError> {
        let rec = WorkspaceRecord {
            leaf_path: self.leaf_path.clone(),
            base_snapshot_digest: self.base_snapshot_digest.clone(),
            status: self.status,
            base_manifest: self.base_manifest.clone(),
        };
        let text = serde_json::to_string_pretty(&rec).expect("workspace records serialize");
        fsutil::write_atomic(&record_path(layout, &self.leaf_path), text.as_bytes())?;
        Ok(())
    }

    /// Where the worker writes its packages.
    pub fn leaf_skills_dir(&self) -> PathBuf {
        self.isolated_root.join(SKILLS_DIR).join(self.leaf_path.dir())
    }
}

/// Copies the leaf's subtrees and the shared files into a fresh workspace.
pub fn spawn_workspace(layout: &Layout, tree: &DomainTree, leaf: &NodePath) -> Result<Workspace, WorkerError> {
    if !tree.get(leaf).is_some_and(|n| n.is_leaf() && n.status.is_live()) {
        return Err(WorkerError::InactiveLeaf(leaf.clone()));
    }
    let rec_path = record_path(layout, leaf);
    if rec_path.exists() {
        let rec: Option<WorkspaceRecord> = fsutil::read_to_string(&rec_path)
            .ok()
            .and_then(|t| serde_json::from_str(&t).ok());
        if rec.is_none_or(|r| r.status == WorkspaceStatus::Open) {
            return Err(WorkerError::DuplicateWorkspace(leaf.clone()));
        }
    }
    let root = workspace_root(layout, leaf);
    fsutil::remove_dir_if_exists(&root)?;
    fsutil::create_dir_all(&root)?;
    for top in [SKILLS_DIR, TESTS_DIR] {
        let rel = format!("{}/{}", top, leaf.dir());
        let src = layout.join(&rel);
        if src.is_dir() {
            fsutil::copy_tree(&src, &root.join(&rel))?;
        }
    }
    let shared = root.join(skillforge_core::ownership::REGISTRY_DIR);
    if layout.registry_dir().is_dir() {
        fsutil::copy_tree(&layout.registry_dir(), &shared)?;
        let _ = std::fs::remove_file(shared.join(crate::layout::LOCK_FILE));
    }
    if layout.taxonomy().is_file() {
        fsutil::copy_file(&layout.taxonomy(), &root.join(TAXONOMY_FILE))?;
    }
    for rel in fsutil::list_files(&shared) {
        fsutil::set_readonly(&shared.join(rel))?;
    }
    if root.join(TAXONOMY_FILE).is_file() {
        fsutil::set_readonly(&root.join(TAXONOMY_FILE))?;
    }
    let ws = Workspace {
        leaf_path: leaf.clone(),
        base_snapshot_digest: state_digest(layout)?,
        status: WorkspaceStatus::Open,
        base_manifest: fsutil::manifest(&root)?,
        isolated_root: root,
    };
    ws.persist(layout)?;
    Ok(ws)
}

/// A shared-state change a worker asked for instead of making it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Followup {
    pub leaf: NodePath,
    pub kind: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArtifactSet {
    pub leaf_path: NodePath,
    /// Changed leaf-owned files and their manifest digests.
    pub files: BTreeMap<String, String>,
    /// Leaf-owned files the worker deleted.
    pub deleted: Vec<String>,
    pub stage_response: Option<StageResponse>,
    pub declared_shared_followups: Vec<Followup>,
    source_root: PathBuf,
}

impl ArtifactSet {
    pub fn source_root(&self) -> &Path {
        &self.source_root
    }
}

fn followups(leaf: &NodePath, response: &StageResponse) -> Result<Vec<Followup>, WorkerError> {
    let payload: LeafStagePayload = response.parse().map_err(|e| WorkerError::UnparseableResponse {
        leaf: leaf.clone(),
        message: e.to_string(),
    })?;
    let mut out = Vec::new();
    for (kind, items) in [
        ("repo_changes", &payload.repo_changes),
        ("blockers", &payload.blockers),
        ("next_steps", &payload.next_steps),
    ] {
        out.extend(items.iter().map(|t| Followup {
            leaf: leaf.clone(),
            kind: kind.to_string(),
            text: t.clone(),
        }));
    }
    Ok(out)
}

/// Diffs the workspace against its base. Any refresh-owned change discards
/// the workspace and fails with the offending paths.
pub fn collect_leaf_artifacts(
    layout: &Layout,
    ws: &mut Workspace,
    response: Option<&StageResponse>,
) -> Result<ArtifactSet, WorkerError> {
    if ws.status != WorkspaceStatus::Open {
        return Err(WorkerError::NotOpen(ws.leaf_path.clone()));
    }
    let now = fsutil::manifest(&ws.isolated_root)?;
    let mut changed = BTreeMap::new();
    let mut deleted = Vec::new();
    for (rel, digest) in &now {
        if ws.base_manifest.get(rel) != Some(digest) {
            changed.insert(rel.clone(), digest.clone());
        }
    }
    for rel in ws.base_manifest.keys() {
        if !now.contains_key(rel) {
            deleted.push(rel.clone());
        }
    }
    let offending: Vec<String> = changed
        .keys()
        .chain(deleted.iter())
        .filter(|p| classify(p, &ws.leaf_path) != Ownership::Leaf)
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if !offending.is_empty() {
        ws.status = WorkspaceStatus::Discarded;
        ws.persist(layout)?;
        return Err(WorkerError::SharedFileWrite {
            leaf: ws.leaf_path.clone(),
            paths: offending,
        });
    }
    let declared = match response {
        Some(r) => match followups(&ws.leaf_path, r) {
            Ok(f) => f,
            Err(e) => {
                ws.status = WorkspaceStatus::Discarded;
                ws.persist(layout)?;
                return Err(e);
            }
        },
        None => Vec::new(),
    };
    ws.status = WorkspaceStatus::Collected;
    ws.persist(layout)?;
    Ok(ArtifactSet {
        leaf_path: ws.leaf_path.clone(),
        files: changed,
        deleted,
        stage_response: response.cloned(),
        declared_shared_followups: declared,
        source_root: ws.isolated_root.clone(),
    })
}

/// Removes the workspace directory and its record.
pub fn close_workspace(layout: &Layout, ws: &Workspace) -> Result<(), WorkerError> {
    fsutil::remove_dir_if_exists(&ws.isolated_root)?;
    let rec = record_path(layout, &ws.leaf_path);
    if rec.exists() {
        std::fs::remove_file(&rec).map_err(fsutil::at(&rec))?;
    }
    Ok(())
}

/// Removes whatever workspace exists for `leaf`, in any state.
pub fn discard_leaf_workspace(layout: &Layout, leaf: &NodePath) -> Result<(), WorkerError> {
    fsutil::remove_dir_if_exists(&workspace_root(layout, leaf))?;
    let rec = record_path(layout, leaf);
    if rec.exists() {
        std::fs::remove_file(&rec).map_err(fsutil::at(&rec))?;
    }
    Ok(())
}

/// What came back from one worker.
#[derive(Debug)]
pub enum WorkerOutput {
    Collected(ArtifactSet),
    Failed { leaf: NodePath, reason: String },
}

impl WorkerOutput {
    pub fn leaf(&self) -> &NodePath {
        match self {
            WorkerOutput::Collected(s) => &s.leaf_path,
            WorkerOutput::Failed { leaf, .. } => leaf,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeReport {
    pub applied: Vec<NodePath>,
    pub excluded: Vec<(NodePath, String)>,
    pub followups: Vec<Followup>,
    pub files_written: usize,
}

/// Applies clean artifact sets to `target_root` in ascending leaf order.
/// Failed outputs are excluded and reported; the caller holds the lock.
pub fn merge_worker_outputs(target_root: &Path, outputs: Vec<WorkerOutput>) -> Result<MergeReport, WorkerError> {
    let mut outputs = outputs;
    outputs.sort_by(|a, b| a.leaf().cmp(b.leaf()));
    let mut report = MergeReport::default();
    let mut clean = Vec::new();
    for out in outputs {
        match out {
            WorkerOutput::Failed { leaf, reason } => report.excluded.push((leaf, reason)),
            WorkerOutput::Collected(set) => clean.push(set),
        }
    }
    let mut owner: BTreeMap<&str, &NodePath> = BTreeMap::new();
    for set in &clean {
        for path in set.files.keys().chain(set.deleted.iter()) {
            if let Some(first) = owner.insert(path, &set.leaf_path) {
                return Err(WorkerError::CrossSetCollision {
                    path: path.clone(),
                    first: first.clone(),
                    second: set.leaf_path.clone(),
                });
            }
        }
    }
    for set in &clean {
        let stray: Vec<String> = set
            .files
            .keys()
            .chain(set.deleted.iter())
            .filter(|p| classify(p, &set.leaf_path) != Ownership::Leaf)
            .cloned()
            .collect();
        if !stray.is_empty() {
            report
                .excluded
                .push((set.leaf_path.clone(), format!("refresh-owned paths: {}", stray.join(", "))));
            continue;
        }
        for rel in set.files.keys() {
            fsutil::copy_file(&set.source_root.join(rel), &target_root.join(rel))?;
            report.files_written += 1;
        }
        for rel in &set.deleted {
            let p = target_root.join(rel);
            if p.exists() {
                std::fs::remove_file(&p).map_err(fsutil::at(&p))?;
            }
        }
        report.applied.push(set.leaf_path.clone());
        report.followups.extend(set.declared_shared_followups.iter().cloned());
    }
    report.excluded.sort();
    Ok(report)
}

/// Runs `work` for every leaf on its own thread, each in a fresh workspace,
/// then collects in leaf order. A worker that errors or panics is discarded.
pub fn run_workers<T, F>(
    layout: &Layout,
    tree: &DomainTree,
    leaves: &[NodePath],
    work: F,
) -> Result<Vec<(WorkerOutput, Option<T>)>, WorkerError>
where
    T: Send,
    F: Fn(&Workspace) -> Result<(Option<StageResponse>, T), String> + Sync,
{
    let mut spaces = Vec::with_capacity(leaves.len());
    for leaf in leaves {
        spaces.push(spawn_workspace(layout, tree, leaf)?);
    }
    let results: Vec<Result<(Option<StageResponse>, T), String>> = thread::scope(|s| {
        let handles: Vec<_> = spaces
            .iter()
            .map(|ws| {
                let work = &work;
                s.spawn(move || panic::catch_unwind(AssertUnwindSafe(|| work(ws))))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| match h.join() {
                Ok(Ok(r)) => r,
                Ok(Err(_)) | Err(_) => Err("worker crashed".to_string()),
            })
            .collect()
    });
    let mut out = Vec::with_capacity(spaces.len());
    for (mut ws, result) in spaces.into_iter().zip(results) {
        match result {
            Ok((response, extra)) => match collect_leaf_artifacts(layout, &mut ws, response.as_ref()) {
                Ok(set) => out.push((WorkerOutput::Collected(set), Some(extra))),
                Err(e) => out.push((
                    WorkerOutput::Failed {
                        leaf: ws.leaf_path.clone(),
                        reason: e.to_string(),
                    },
                    None,
                )),
            },
            Err(reason) => {
                ws.status = WorkspaceStatus::Discarded;
                ws.persist(layout)?;
                out.push((
                    WorkerOutput::Failed {
                        leaf: ws.leaf_path.clone(),
                        reason,
                    },
                    None,
                ));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn project() -> (tempfile::TempDir, Layout, DomainTree) {
        let dir = tempfile::tempdir().unwrap();
        let layout = Layout::new(dir.path());
        let lib = crate::store::init_project(&layout, "lab\n  bench\n    a*\n    b*\n").unwrap();
        let tree = lib.tree.clone();
        (dir, layout, tree)
    }

    #[test]
    fn duplicate_spawn_and_empty_collect() {
        let (_d, layout, tree) = project();
        let leaf: NodePath = "lab/bench/a".parse().unwrap();
        let mut ws = spawn_workspace(&layout, &tree, &leaf).unwrap();
        assert!(matches!(
            spawn_workspace(&layout, &tree, &leaf),
            Err(WorkerError::DuplicateWorkspace(_))
        ));
        let set = collect_leaf_artifacts(&layout, &mut ws, None).unwrap();
        assert!(set.files.is_empty());
        assert!(ws.isolated_root.join("registry/skills.ndjson").exists());
    }

    #[test]
    fn shared_writes_discard_the_workspace() {
        let (_d, layout, tree) = project();
        let leaf: NodePath = "lab/bench/b".parse().unwrap();
        let mut ws = spawn_workspace(&layout, &tree, &leaf).unwrap();
        std::fs::write(ws.isolated_root.join("skills.ndjson"), "{}\n").unwrap();
        std::fs::create_dir_all(ws.leaf_skills_dir()).unwrap();
        std::fs::write(ws.leaf_skills_dir().join("x.txt"), "x").unwrap();
        match collect_leaf_artifacts(&layout, &mut ws, None) {
            Err(WorkerError::SharedFileWrite { paths, .. }) => assert_eq!(paths, vec!["skills.ndjson"]),
            other => panic!("{:?}", other),
        }
        assert_eq!(ws.status, WorkspaceStatus::Discarded);
    }
}
