//! The cycle controller: tree_check, resource_search, skill_build,
//! skill_test and refresh, plus layer-2 evaluation batches and the
//! prompt-driven design mode.
//!
//! A cycle works on an in-memory copy of the library. Packages are staged
//! under `workspaces/cycle-<n>/` with the same relative layout as the project
//! root. Nothing shared is written until refresh, which holds the writer lock.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use skillforge_core::contract::{
    check_contract, confidence, needs_scheduler, resolve_smoke_target, SkillContract, TestCommand,
};
use skillforge_core::digest::{sha256_hex, Digester};
use skillforge_core::library::VerdictEffect;
use skillforge_core::novelty::{adjudicate, search_catalogs, Catalog, Decision, NoveltyVerdict, ProviderOpinion};
use skillforge_core::ownership::clean_relative;
use skillforge_core::path::slugify;
use skillforge_core::priority::{describe, prioritize_branches, prioritize_within, BranchPriority};
use skillforge_core::registry::{
    Layer, LibraryStats, Outcome, RegistryError, ResourceEntry, SkillEntry, SkillStatus, VerificationRecord,
};
use skillforge_core::stage::{
    BenchmarkPayload, Edit, EditOp, FixPayload, LeafStagePayload, NoveltyPayload, OptimizePayload,
    RefreshPayload, ResourceCandidate, ResourceSearchPayload, SkillBuildPayload, SkillCandidate, StageError,
    StageKind, StageResponse, TreeCheckPayload,
};
use skillforge_core::timing::StageDuration;
use skillforge_core::tree::LeafSpec;
use skillforge_core::{DomainTree, Library, LibraryError, NodePath, Registry};

use crate::catalog::{entry_for, load_catalogs, local_catalog, CatalogError};
use crate::config::{Budgets, Config, ConfigError};
use crate::export::{export_site, timing_summary, ExportError, TimingSummary};
use crate::fsutil::{self, FsError};
use crate::harness::{
    benchmark_compare, execution_test, load_cases, optimize_loop, persist_benchmark, repair_loop, synthetic_test,
    system_test, BenchmarkReport, CaseScore, Harness, HarnessError, OptimizeStatus, RepairStatus, SlurmAdapter,
    TestReport,
};
use crate::layout::Layout;
use crate::package::{compile_package, read_contract, PackageError};
use crate::provider::{Gateway, GatewayError};
use crate::store::{self, open_library, registry_digest, LockMode, StoreError, WriterLock};
use crate::workers::{discard_leaf_workspace, merge_worker_outputs, run_workers, Followup, WorkerError, WorkerOutput};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("out-of-order stage: expected {}, got {got}", expected.map(|s| s.as_str()).unwrap_or("none (cycle complete)"))]
    OutOfOrderStage { expected: Option<StageKind>, got: StageKind },
    #[error("{0} is not a cycle stage")]
    NotACycleStage(StageKind),
    #[error("stage {stage}: {source}")]
    Gateway {
        stage: StageKind,
        #[source]
        source: GatewayError,
    },
    #[error("stage {stage}: {source}")]
    Payload {
        stage: StageKind,
        #[source]
        source: StageError,
    },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Library(#[from] LibraryError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Package(#[from] PackageError),
    #[error(transparent)]
    Worker(#[from] WorkerError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Export(#[from] ExportError),
    #[error(transparent)]
    Fs(#[from] FsError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("shared state changed since the cycle began; refresh refused")]
    ConcurrentWriter,
    #[error("integrity check failed, refresh rolled back: {}", .0.join("; "))]
    Integrity(Vec<String>),
    #[error("cycle {cycle} aborted in {stage}: {source}")]
    Aborted {
        cycle: u64,
        stage: StageKind,
        source: Box<PipelineError>,
    },
    #[error("empty task prompt")]
    EmptyPrompt,
    #[error("unknown skill {0}")]
    UnknownSkill(String),
    #[error("skill {0} has no smoke target")]
    NoSmokeTarget(String),
}

/// How resource_search and skill_build are carried out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Sequential,
    /// One isolated worker per focus leaf.
    Parallel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageOutcome {
    pub stage: StageKind,
    /// Digest of the provider responses the stage consumed, or of its
    /// reports when it made no call.
    pub digest: String,
    pub duration_micros: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "state")]
pub enum CycleStatus {
    Completed,
    Aborted { stage: StageKind, error: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleReport {
    pub cycle_index: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub branch: Option<NodePath>,
    pub mode: Mode,
    pub status: CycleStatus,
    pub stages: Vec<StageOutcome>,
    pub focus_leaves: Vec<NodePath>,
    pub created: Vec<String>,
    pub verified: Vec<String>,
    pub removed: Vec<String>,
    /// Retired by novelty review or provider edits.
    pub retired: Vec<String>,
    pub tree_edits: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub followups: Vec<Followup>,
}

impl CycleReport {
    pub fn stage_order(&self) -> Vec<StageKind> {
        self.stages.iter().map(|s| s.stage).collect()
    }

    pub fn durations(&self) -> Vec<StageDuration> {
        self.stages
            .iter()
            .map(|s| StageDuration {
                stage: s.stage,
                micros: s.duration_micros,
            })
            .collect()
    }

    pub fn is_completed(&self) -> bool {
        self.status == CycleStatus::Completed
    }
}

fn read_ndjson<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, PipelineError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = fsutil::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| {
                PipelineError::Store(StoreError::Corrupt {
                    file: path.to_path_buf(),
                    line: i + 1,
                    message: e.to_string(),
                })
            })
        })
        .collect()
}

fn append_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let line = serde_json::to_string(value).expect("reports serialize");
    fsutil::append_lines(path, &[line])?;
    Ok(())
}

pub fn read_cycle_reports(layout: &Layout) -> Result<Vec<CycleReport>, PipelineError> {
    read_ndjson(&layout.cycle_log())
}

pub fn read_evaluation_reports(layout: &Layout) -> Result<Vec<EvaluationReport>, PipelineError> {
    read_ndjson(&layout.evaluation_log())
}

/// One past the highest cycle index logged, aborted cycles included.
pub fn next_cycle_index(layout: &Layout) -> Result<u64, PipelineError> {
    Ok(read_cycle_reports(layout)?
        .iter()
        .map(|r| r.cycle_index)
        .max()
        .unwrap_or(0)
        + 1)
}

/// Live verified skills without any benchmark record, in id order.
pub fn pending_skills(registry: &Registry) -> Vec<String> {
    registry
        .skills()
        .filter(|s| s.status == SkillStatus::Verified && registry.attempts(&s.id, Layer::Benchmark) == 0)
        .map(|s| s.id.clone())
        .collect()
}

/// Cycle state. Public fields mirror what a caller may inspect between stages.
#[derive(Debug)]
pub struct PipelineState {
    pub cycle_index: u64,
    /// Last completed stage; `None` while idle.
    pub stage_cursor: Option<StageKind>,
    pub focus_leaves: Vec<NodePath>,
    pub branch: Option<NodePath>,
    pub mode: Mode,
    pub pending_skills: BTreeSet<String>,
    pub budgets: Budgets,
    library: Library,
    base: (String, String),
    staging: PathBuf,
    proposed_edits: Vec<Edit>,
    found: BTreeMap<NodePath, Vec<String>>,
    staged: BTreeMap<NodePath, Vec<StagedPackage>>,
    built: Vec<String>,
    outcomes: Vec<StageOutcome>,
    created: Vec<String>,
    verified: Vec<String>,
    removed: Vec<String>,
    retired: Vec<String>,
    tree_edits: Vec<String>,
    followups: Vec<Followup>,
}

impl PipelineState {
    pub fn library(&self) -> &Library {
        &self.library
    }

    pub fn staging_root(&self) -> &Path {
        &self.staging
    }

    pub fn outcomes(&self) -> &[StageOutcome] {
        &self.outcomes
    }

    fn report(&self, status: CycleStatus) -> CycleReport {
        CycleReport {
            cycle_index: self.cycle_index,
            branch: self.branch.clone(),
            mode: self.mode,
            status,
            stages: self.outcomes.clone(),
            focus_leaves: self.focus_leaves.clone(),
            created: self.created.clone(),
            verified: self.verified.clone(),
            removed: self.removed.clone(),
            retired: self.retired.clone(),
            tree_edits: self.tree_edits.clone(),
            followups: self.followups.clone(),
        }
    }
}

/// A package a leaf worker compiled, waiting for registration.
#[derive(Debug, Clone, PartialEq, Eq)]
struct StagedPackage {
    name: String,
    package_path: String,
    leaf_label: Option<String>,
}

#[derive(Debug, Default)]
struct WorkerYield {
    resources: Vec<ResourceCandidate>,
    packages: Vec<StagedPackage>,
    notes: Vec<String>,
}

/// Outcome of layer-1 testing for one skill.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusReport {
    pub stats: LibraryStats,
    pub pending_skills: Vec<String>,
    pub cycles_completed: usize,
    pub cycles_aborted: usize,
    pub integrity_violations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestSummary {
    pub skill_id: String,
    pub status: SkillStatus,
    pub execution_attempts: u32,
    pub reports: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillEvaluation {
    pub skill_id: String,
    pub margin: f64,
    pub weak: bool,
    pub status: SkillStatus,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub batch: u64,
    pub skills: Vec<SkillEvaluation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignStatus {
    Passed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignReport {
    pub task_prompt: String,
    pub status: DesignStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skill_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skill_status: Option<SkillStatus>,
    pub resources: Vec<String>,
    pub resource_search_skipped: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Decision>,
    pub response_locator: String,
    pub notes: Vec<String>,
}

type RefreshFault = Box<dyn Fn(&mut Library) + Send + Sync>;

/// Engine-wide collaborators: layout, configuration, gateway and harness.
pub struct Engine {
    pub layout: Layout,
    pub config: Config,
    gateway: Gateway,
    harness: Harness,
    external: Vec<Catalog>,
    refresh_fault: Option<RefreshFault>,
}

fn digest_responses<'a>(responses: impl IntoIterator<Item = &'a StageResponse>) -> String {
    let mut d = Digester::new();
    for (i, r) in responses.into_iter().enumerate() {
        d.entry(&i.to_string(), r.digest().as_bytes());
    }
    d.finish_hex()
}

fn ctx(pairs: &[(&str, String)]) -> BTreeMap<String, String> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

fn live_leaf(tree: &DomainTree, path: &NodePath) -> bool {
    tree.get(path).is_some_and(|n| n.is_leaf() && n.status.is_live())
}

/// `skills/<leaf-dir>/<slug>`, suffixed until `taken` says it is free.
fn package_dir(focus: &NodePath, name: &str, taken: impl Fn(&str) -> bool) -> String {
    let mut base = slugify(name);
    if base.is_empty() {
        base = "skill".to_string();
    }
    let prefix = format!("{}/{}", skillforge_core::ownership::SKILLS_DIR, focus.dir());
    let first = format!("{}/{}", prefix, base);
    if !taken(&first) {
        return first;
    }
    (2u32..)
        .map(|n| format!("{}/{}-{}", prefix, base, n))
        .find(|p| !taken(p))
        .expect("unbounded suffix range")
}

/// Registry ids for the provenance links a contract names, by id or locator.
fn map_provenance(registry: &Registry, links: &[String]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for link in links {
        let id = registry
            .resource(link)
            .or_else(|| registry.resource_by_locator(link))
            .map(|r| r.id.clone());
        if let Some(id) = id {
            if !out.contains(&id) {
                out.push(id);
            }
        }
    }
    out
}

/// Where a candidate lives: the focus leaf, or a sibling named by the
/// provider when that sibling is absent or a live leaf.
fn candidate_leaf(tree: &DomainTree, focus: &NodePath, label: Option<&str>, notes: &mut Vec<String>) -> NodePath {
    let Some(label) = label.filter(|l| !l.trim().is_empty()) else {
        return focus.clone();
    };
    let sibling = focus.parent().and_then(|p| p.child(label).ok());
    match sibling {
        Some(s) if !tree.contains(&s) || live_leaf(tree, &s) => s,
        _ => {
            notes.push(format!("leaf label {:?} unusable; kept {}", label, focus));
            focus.clone()
        }
    }
}

fn reason_or<'a>(e: &'a Edit, default: &'a str) -> &'a str {
    e.reason.as_deref().unwrap_or(default)
}

fn parse_path(field: &Option<String>, name: &str) -> Result<NodePath, String> {
    field
        .as_deref()
        .ok_or_else(|| format!("missing {}", name))?
        .parse()
        .map_err(|e| format!("{}: {}", name, e))
}

/// Applies one provider-proposed edit. Errors are returned as text and
/// the edit is skipped.
fn apply_edit(lib: &mut Library, edit: &Edit, cycle: u64) -> Result<String, String> {
    match edit.op {
        EditOp::Prune => {
            let path = parse_path(&edit.path, "path")?;
            let retired = lib
                .prune_leaf(&path, reason_or(edit, "provider prune"), cycle)
                .map_err(|e| e.to_string())?;
            Ok(format!("prune {} (retired {})", path, retired.len()))
        }
        EditOp::Merge => {
            let a = parse_path(&edit.path, "path")?;
            let b = parse_path(&edit.other, "other")?;
            let s = match &edit.survivor {
                Some(_) => parse_path(&edit.survivor, "survivor")?,
                None => a.clone(),
            };
            lib.merge_leaves(&a, &b, &s, cycle).map_err(|e| e.to_string())?;
            Ok(format!("merge {} + {} -> {}", a, b, s))
        }
        EditOp::Split => {
            let path = parse_path(&edit.path, "path")?;
            let parts: Vec<(LeafSpec, Vec<String>)> = edit
                .partitions
                .iter()
                .map(|p| (LeafSpec::new(p.label.clone(), cycle), p.skills.clone()))
                .collect();
            let created = lib.split_leaf(&path, &parts, cycle).map_err(|e| e.to_string())?;
            Ok(format!("split {} into {}", path, created.len()))
        }
        EditOp::Deprecate => {
            let id = edit.skill_id.as_deref().ok_or("missing skill_id")?;
            let e = lib.retire_skill(id, cycle).map_err(|e| e.to_string())?;
            Ok(format!("retire {} ({})", id, e.status))
        }
        EditOp::Relink => {
            let id = edit.skill_id.as_deref().ok_or("missing skill_id")?;
            let leaf = parse_path(&edit.leaf_path, "leaf_path")?;
            lib.relink_skill(id, &leaf, cycle).map_err(|e| e.to_string())?;
            Ok(format!("relink {} -> {}", id, leaf))
        }
    }
}

fn tail(path: &Path, max: usize) -> String {
    let text = std::fs::read_to_string(path).unwrap_or_default();
    let start = text.len().saturating_sub(max);
    let mut i = start;
    while !text.is_char_boundary(i) {
        i += 1;
    }
    text[i..].to_string()
}

impl Engine {
    pub fn new(layout: Layout, config: Config, gateway: Gateway) -> Result<Self, PipelineError> {
        let external = load_catalogs(&config.catalog_paths())?;
        let harness = Harness::new(
            layout.root().to_path_buf(),
            Duration::from_secs(config.budgets.smoke_timeout_secs.max(1)),
        );
        Ok(Self {
            layout,
            config,
            gateway,
            harness,
            external,
            refresh_fault: None,
        })
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    pub fn harness(&self) -> &Harness {
        &self.harness
    }

    /// Runs `fault` on the working library just before refresh checks
    /// integrity. Used for fault-injection tests.
    pub fn set_refresh_fault(&mut self, fault: impl Fn(&mut Library) + Send + Sync + 'static) {
        self.refresh_fault = Some(Box::new(fault));
    }

    fn call(
        &self,
        stage: StageKind,
        context: &BTreeMap<String, String>,
        key: &str,
    ) -> Result<StageResponse, PipelineError> {
        self.gateway
            .call(stage, context, key)
            .map_err(|source| PipelineError::Gateway { stage, source })
    }

    fn smoke(&self, contract: &SkillContract) -> Option<TestCommand> {
        resolve_smoke_target(contract).map(|mut t| {
            t.timeout_secs = self.config.budgets.smoke_timeout_secs.max(1);
            t
        })
    }

    // ---- cycle ------------------------------------------------------------------

    /// Loads the committed library and opens a fresh staging area.
    pub fn begin_cycle(&self, mode: Mode, branch: Option<NodePath>) -> Result<PipelineState, PipelineError> {
        let library = open_library(&self.layout)?;
        let cycle_index = next_cycle_index(&self.layout)?;
        let staging = self.layout.workspaces_dir().join(format!("cycle-{}", cycle_index));
        fsutil::remove_dir_if_exists(&staging)?;
        fsutil::create_dir_all(&staging)?;
        let base = (registry_digest(&self.layout)?, library.tree.digest());
        Ok(PipelineState {
            cycle_index,
            stage_cursor: None,
            focus_leaves: Vec::new(),
            branch,
            mode,
            pending_skills: pending_skills(&library.registry).into_iter().collect(),
            budgets: self.config.budgets.clone(),
            library,
            base,
            staging,
            proposed_edits: Vec::new(),
            found: BTreeMap::new(),
            staged: BTreeMap::new(),
            built: Vec::new(),
            outcomes: Vec::new(),
            created: Vec::new(),
            verified: Vec::new(),
            removed: Vec::new(),
            retired: Vec::new(),
            tree_edits: Vec::new(),
            followups: Vec::new(),
        })
    }

    /// Runs the next stage of the cycle. Stages run only in cycle order.
    pub fn run_stage(&self, state: &mut PipelineState, stage: StageKind) -> Result<StageOutcome, PipelineError> {
        let pos = stage.cycle_position().ok_or(PipelineError::NotACycleStage(stage))?;
        let expected = match state.stage_cursor {
            None => Some(StageKind::TreeCheck),
            Some(s) => StageKind::CYCLE.get(s.cycle_position().unwrap_or(0) + 1).copied(),
        };
        if expected != Some(stage) {
            return Err(PipelineError::OutOfOrderStage { expected, got: stage });
        }
        let started = Instant::now();
        let (digest, notes) = match pos {
            0 => self.tree_check(state)?,
            1 => self.resource_search(state)?,
            2 => self.skill_build(state)?,
            3 => self.skill_test(state)?,
            _ => self.refresh(state)?,
        };
        let outcome = StageOutcome {
            stage,
            digest,
            duration_micros: started.elapsed().as_micros() as u64,
            notes,
        };
        state.stage_cursor = Some(stage);
        state.outcomes.push(outcome.clone());
        Ok(outcome)
    }

    /// Runs all five stages. On error the staging area is dropped, an aborted
    /// report is logged and shared state is left as it was.
    pub fn run_cycle(&self, mode: Mode, branch: Option<NodePath>) -> Result<CycleReport, PipelineError> {
        let mut state = self.begin_cycle(mode, branch)?;
        for stage in StageKind::CYCLE {
            if let Err(e) = self.run_stage(&mut state, stage) {
                let _ = fsutil::remove_dir_if_exists(&state.staging);
                let report = state.report(CycleStatus::Aborted {
                    stage,
                    error: e.to_string(),
                });
                append_json(&self.layout.cycle_log(), &report)?;
                return Err(PipelineError::Aborted {
                    cycle: state.cycle_index,
                    stage,
                    source: Box::new(e),
                });
            }
        }
        fsutil::remove_dir_if_exists(&state.staging)?;
        let report = state.report(CycleStatus::Completed);
        append_json(&self.layout.cycle_log(), &report)?;
        Ok(report)
    }

    fn ranking(&self, state: &PipelineState, k: usize) -> Vec<BranchPriority> {
        let lib = &state.library;
        match &state.branch {
            Some(b) => prioritize_within(&lib.tree, &lib.registry, state.cycle_index, k, b),
            None => prioritize_branches(&lib.tree, &lib.registry, state.cycle_index, k),
        }
    }

    fn tree_check(&self, state: &mut PipelineState) -> Result<(String, Vec<String>), PipelineError> {
        let k = state.budgets.focus_leaves.max(1);
        let ranked = self.ranking(state, usize::MAX);
        let summary = state.library.tree.coverage_summary();
        let ranked_text: Vec<String> = ranked
            .iter()
            .take(k)
            .map(|p| format!("{} score={} reasons={}", p.path, p.score, describe(&p.reasons)))
            .collect();
        let context = ctx(&[
            (
                "repository_summary",
                format!(
                    "cycle {}; {} leaves ({} covered, {} partial, {} uncovered); {} skills; {} resources",
                    state.cycle_index,
                    summary.leaves,
                    summary.covered_leaves,
                    summary.partial_leaves,
                    summary.uncovered_leaves,
                    state.library.registry.skill_count(),
                    state.library.registry.resource_count()
                ),
            ),
            ("ranked_leaves", ranked_text.join("\n")),
        ]);
        let resp = self.call(StageKind::TreeCheck, &context, &format!("c{}", state.cycle_index))?;
        let payload: TreeCheckPayload = resp.parse().map_err(|source| PipelineError::Payload {
            stage: StageKind::TreeCheck,
            source,
        })?;
        let suggested: BTreeSet<NodePath> = payload.focus_leaves.iter().filter_map(|s| s.parse().ok()).collect();
        let mut notes = Vec::new();
        // Suggestions outside the live leaves of the branch are dropped; the
        // rest are taken in priority order up to the budget.
        let mut focus: Vec<NodePath> = ranked
            .iter()
            .filter(|p| suggested.contains(&p.path))
            .take(k)
            .map(|p| p.path.clone())
            .collect();
        if focus.is_empty() {
            focus = ranked.iter().take(k).map(|p| p.path.clone()).collect();
            if focus.is_empty() {
                notes.push("no live leaves to mine".to_string());
            } else {
                notes.push(format!(
                    "provider suggestions {:?} name no live leaf; took the top {} by priority",
                    payload.focus_leaves,
                    focus.len()
                ));
            }
        } else if suggested.len() > focus.len() {
            notes.push(format!("kept {} of {} suggested focus leaves", focus.len(), suggested.len()));
        }
        state.focus_leaves = focus;
        state.proposed_edits = payload.proposed_edits;
        Ok((digest_responses([&resp]), notes))
    }

    /// Records the highest-authority resources within budget and returns
    /// their ids.
    fn record_resources(
        &self,
        lib: &mut Library,
        focus: &NodePath,
        mut offered: Vec<ResourceCandidate>,
        cycle: u64,
        notes: &mut Vec<String>,
    ) -> Result<Vec<String>, PipelineError> {
        offered.sort_by(|a, b| {
            Reverse(a.authority_rank)
                .cmp(&Reverse(b.authority_rank))
                .then_with(|| a.locator.cmp(&b.locator))
        });
        let mut seen = BTreeSet::new();
        offered.retain(|c| !c.locator.trim().is_empty() && seen.insert(c.locator.clone()));
        let budget = self.config.budgets.search_per_leaf;
        if offered.len() > budget {
            notes.push(format!(
                "{}: search budget exhausted, recorded {} of {} offered",
                focus,
                budget,
                offered.len()
            ));
        }
        let mut ids = Vec::new();
        for c in offered.into_iter().take(budget) {
            let leaf = c
                .leaf_path
                .parse::<NodePath>()
                .ok()
                .filter(|p| live_leaf(&lib.tree, p))
                .unwrap_or_else(|| focus.clone());
            let receipt = lib.record_resource(ResourceEntry::new(c.kind, &c.locator, leaf, cycle, c.authority_rank))?;
            ids.push(receipt.id);
        }
        Ok(ids)
    }

    fn resource_search(&self, state: &mut PipelineState) -> Result<(String, Vec<String>), PipelineError> {
        match state.mode {
            Mode::Sequential => self.resource_search_sequential(state),
            Mode::Parallel => self.resource_search_parallel(state),
        }
    }

    fn resource_search_sequential(&self, state: &mut PipelineState) -> Result<(String, Vec<String>), PipelineError> {
        let mut notes = Vec::new();
        let mut responses = Vec::new();
        for focus in state.focus_leaves.clone() {
            let context = ctx(&[
                ("target_leaf", focus.to_string()),
                ("budget", self.config.budgets.search_per_leaf.to_string()),
            ]);
            let key = format!("c{}-{}", state.cycle_index, focus.slug());
            let resp = self.call(StageKind::ResourceSearch, &context, &key)?;
            let payload: ResourceSearchPayload = resp.parse().map_err(|source| PipelineError::Payload {
                stage: StageKind::ResourceSearch,
                source,
            })?;
            let ids = self.record_resources(&mut state.library, &focus, payload.resources, state.cycle_index, &mut notes)?;
            state.found.insert(focus, ids);
            responses.push(resp);
        }
        Ok((digest_responses(&responses), notes))
    }

    fn resource_search_parallel(&self, state: &mut PipelineState) -> Result<(String, Vec<String>), PipelineError> {
        let cycle = state.cycle_index;
        let cap = self.config.budgets.candidates_per_leaf;
        let gateway = &self.gateway;
        let outputs = run_workers(&self.layout, &state.library.tree, &state.focus_leaves, |ws| {
            let leaf = &ws.leaf_path;
            let artifact_dir = format!("{}/{}", skillforge_core::ownership::SKILLS_DIR, leaf.dir());
            let context = ctx(&[("target_leaf", leaf.to_string()), ("artifact_directory", artifact_dir)]);
            let key = format!("c{}-{}", cycle, leaf.slug());
            let resp = gateway
                .call(StageKind::ParallelLeafStage, &context, &key)
                .map_err(|e| format!("parallel_leaf_stage: {}", e))?;
            let payload: LeafStagePayload = resp.parse().map_err(|e| e.to_string())?;
            let mut out = WorkerYield {
                resources: payload.payload.resources.clone(),
                ..WorkerYield::default()
            };
            if payload.payload.candidates.len() > cap {
                out.notes.push(format!(
                    "{}: kept {} of {} candidates",
                    leaf,
                    cap,
                    payload.payload.candidates.len()
                ));
            }
            for cand in payload.payload.candidates.iter().take(cap) {
                let dir = package_dir(leaf, &cand.name, |p| ws.isolated_root.join(p).exists());
                match compile_package(&cand.name, &cand.contract, &cand.artifacts, &ws.isolated_root.join(&dir)) {
                    Ok(_) => out.packages.push(StagedPackage {
                        name: cand.name.clone(),
                        package_path: dir,
                        leaf_label: cand.leaf_label.clone(),
                    }),
                    Err(e) => {
                        let _ = fsutil::remove_dir_if_exists(&ws.isolated_root.join(&dir));
                        out.notes.push(format!("{}: candidate {} rejected: {}", leaf, cand.name, e));
                    }
                }
            }
            for f in &payload.payload.files {
                let rel = clean_relative(&f.path).map_err(|e| e.to_string())?;
                let path = ws.isolated_root.join(&rel);
                fsutil::write_atomic(&path, f.content.as_bytes()).map_err(|e| e.to_string())?;
            }
            Ok((Some(resp), out))
        })?;
        let mut notes = Vec::new();
        let mut responses = Vec::new();
        let mut yields: BTreeMap<NodePath, WorkerYield> = BTreeMap::new();
        let mut sets = Vec::new();
        for (output, extra) in outputs {
            if let WorkerOutput::Collected(set) = &output {
                if let Some(r) = &set.stage_response {
                    responses.push(r.clone());
                }
                if let Some(y) = extra {
                    yields.insert(set.leaf_path.clone(), y);
                }
            }
            sets.push(output);
        }
        let merged = merge_worker_outputs(&state.staging, sets)?;
        for (leaf, reason) in &merged.excluded {
            notes.push(format!("worker {} excluded: {}", leaf, reason));
        }
        for leaf in &state.focus_leaves {
            discard_leaf_workspace(&self.layout, leaf)?;
        }
        state.followups.extend(merged.followups.iter().cloned());
        for leaf in &merged.applied {
            let y = yields.remove(leaf).unwrap_or_default();
            notes.extend(y.notes);
            let ids = self.record_resources(&mut state.library, leaf, y.resources, state.cycle_index, &mut notes)?;
            state.found.insert(leaf.clone(), ids);
            state.staged.insert(leaf.clone(), y.packages);
        }
        Ok((digest_responses(&responses), notes))
    }

    /// Validates placement and provenance, then registers an untested entry.
    fn register_candidate(
        &self,
        state: &mut PipelineState,
        focus: &NodePath,
        name: &str,
        contract: &SkillContract,
        leaf_label: Option<&str>,
        package_path: &str,
        notes: &mut Vec<String>,
    ) -> Result<Option<String>, PipelineError> {
        if let Err(e) = check_contract(contract) {
            notes.push(format!("candidate {} rejected: {}", name, e));
            return Ok(None);
        }
        let provenance = map_provenance(&state.library.registry, &contract.provenance_links);
        if provenance.is_empty() {
            notes.push(format!("candidate {} rejected: no recorded provenance", name));
            return Ok(None);
        }
        let leaf = candidate_leaf(&state.library.tree, focus, leaf_label, notes);
        let id = state.library.registry.allocate_skill_id(&leaf, name);
        state.library.registry.upsert_skill(SkillEntry {
            id: id.clone(),
            name: name.to_string(),
            leaf_path: leaf,
            status: SkillStatus::Untested,
            package_path: package_path.to_string(),
            smoke_target: resolve_smoke_target(contract).map(|t| t.command),
            provenance,
            created_cycle: state.cycle_index,
            updated_cycle: state.cycle_index,
            confidence: confidence(contract),
        })?;
        Ok(Some(id))
    }

    fn skill_build(&self, state: &mut PipelineState) -> Result<(String, Vec<String>), PipelineError> {
        let mut notes = Vec::new();
        let mut responses = Vec::new();
        let cap = self.config.budgets.candidates_per_leaf;
        match state.mode {
            Mode::Sequential => {
                for focus in state.focus_leaves.clone() {
                    let found = state.found.get(&focus).cloned().unwrap_or_default();
                    let locators: Vec<String> = found
                        .iter()
                        .filter_map(|id| state.library.registry.resource(id).map(|r| format!("{} {}", id, r.locator)))
                        .collect();
                    let context = ctx(&[("target_leaf", focus.to_string()), ("resources", locators.join("\n"))]);
                    let key = format!("c{}-{}", state.cycle_index, focus.slug());
                    let resp = self.call(StageKind::SkillBuild, &context, &key)?;
                    let payload: SkillBuildPayload = resp.parse().map_err(|source| PipelineError::Payload {
                        stage: StageKind::SkillBuild,
                        source,
                    })?;
                    if payload.candidates.len() > cap {
                        notes.push(format!("{}: kept {} of {} candidates", focus, cap, payload.candidates.len()));
                    }
                    for cand in payload.candidates.iter().take(cap) {
                        self.build_sequential(state, &focus, cand, &mut notes)?;
                    }
                    responses.push(resp);
                }
                Ok((digest_responses(&responses), notes))
            }
            Mode::Parallel => {
                let mut d = Digester::new();
                for (leaf, packages) in state.staged.clone() {
                    for p in packages {
                        let root = state.staging.join(&p.package_path);
                        let contract = match read_contract(&root) {
                            Ok(c) => c,
                            Err(e) => {
                                notes.push(format!("candidate {} unreadable: {}", p.name, e));
                                continue;
                            }
                        };
                        let id = self.register_candidate(
                            state,
                            &leaf,
                            &p.name,
                            &contract,
                            p.leaf_label.as_deref(),
                            &p.package_path,
                            &mut notes,
                        )?;
                        match id {
                            Some(id) => {
                                d.entry(&id, crate::package::package_digest(&root)?.as_bytes());
                                state.built.push(id.clone());
                                state.created.push(id);
                            }
                            None => fsutil::remove_dir_if_exists(&root)?,
                        }
                    }
                }
                Ok((d.finish_hex(), notes))
            }
        }
    }

    fn build_sequential(
        &self,
        state: &mut PipelineState,
        focus: &NodePath,
        cand: &SkillCandidate,
        notes: &mut Vec<String>,
    ) -> Result<(), PipelineError> {
        let staging = state.staging.clone();
        let root = self.layout.root().to_path_buf();
        let dir = package_dir(focus, &cand.name, |p| staging.join(p).exists() || root.join(p).exists());
        let dest = staging.join(&dir);
        if let Err(e) = compile_package(&cand.name, &cand.contract, &cand.artifacts, &dest) {
            fsutil::remove_dir_if_exists(&dest)?;
            notes.push(format!("candidate {} rejected: {}", cand.name, e));
            return Ok(());
        }
        match self.register_candidate(
            state,
            focus,
            &cand.name,
            &cand.contract,
            cand.leaf_label.as_deref(),
            &dir,
            notes,
        )? {
            Some(id) => {
                state.built.push(id.clone());
                state.created.push(id);
            }
            None => fsutil::remove_dir_if_exists(&dest)?,
        }
        Ok(())
    }

    fn record_report(&self, lib: &mut Library, report: &TestReport, cycle: u64) -> Result<SkillEntry, PipelineError> {
        Ok(lib.record_verification(VerificationRecord {
            skill_id: report.skill_id.clone(),
            layer: report.layer,
            outcome: report.verdict,
            attempt: report.attempt,
            report_locator: report.report_locator.clone(),
            cycle,
        })?)
    }

    /// Execution test with the repair loop. Returns true when the skill
    /// was removed.
    #[allow(clippy::too_many_arguments)]
    fn execution_layer(
        &self,
        lib: &mut Library,
        skill_id: &str,
        package_root: &Path,
        smoke: &TestCommand,
        key: &str,
        cycle: u64,
        summary: &mut TestSummary,
    ) -> Result<bool, PipelineError> {
        let first_attempt = lib.registry.next_attempt(skill_id, Layer::Execution);
        let first = execution_test(&self.harness, skill_id, package_root, Some(smoke), first_attempt)?;
        self.record_report(lib, &first, cycle)?;
        summary.reports.push(first.report_locator.clone());
        summary.execution_attempts = 1;
        if first.verdict != Outcome::Pass {
            let budget = first_attempt + self.config.budgets.repair_attempts.max(1) - 1;
            let gateway = &self.gateway;
            let outcome = repair_loop(
                &self.harness,
                skill_id,
                package_root,
                &first,
                smoke,
                budget,
                |attempt, last| {
                    let dir = self.harness.run_dir(skill_id, "execution", last.attempt);
                    let context = ctx(&[
                        ("skill_id", skill_id.to_string()),
                        ("attempt", attempt.to_string()),
                        ("failing_command", last.command.clone()),
                        ("exit_status", format!("{:?}", last.exit_status)),
                        ("stderr_tail", tail(&dir.join("stderr.log"), 2000)),
                        ("note", last.note.clone().unwrap_or_default()),
                    ]);
                    let resp = gateway
                        .call(StageKind::Layer1Fix, &context, key)
                        .map_err(|e| HarnessError::Provider(e.to_string()))?;
                    resp.parse::<FixPayload>()
                        .map_err(|e| HarnessError::Provider(e.to_string()))
                },
            )?;
            for r in &outcome.reports {
                self.record_report(lib, r, cycle)?;
                summary.reports.push(r.report_locator.clone());
            }
            summary.execution_attempts += outcome.reports.len() as u32;
            summary.notes.extend(outcome.diagnoses.iter().map(|d| format!("fix: {}", d)));
            if let RepairStatus::Removed { attempts } = outcome.status {
                lib.set_status(skill_id, SkillStatus::Removed, cycle)?;
                summary.notes.push(format!("removed after {} execution attempts", attempts));
                summary.status = SkillStatus::Removed;
                return Ok(true);
            }
        }
        Ok(false)
    }

    /// Layer-1 testing of one skill: execution with repair, then synthetic
    /// and, where the contract needs a scheduler, system testing. `only`
    /// restricts the run to one layer.
    pub fn test_skill(
        &self,
        lib: &mut Library,
        skill_id: &str,
        package_root: &Path,
        key: &str,
        cycle: u64,
        only: Option<Layer>,
    ) -> Result<TestSummary, PipelineError> {
        let wants = |l: Layer| only.is_none_or(|o| o == l);
        let entry = lib
            .registry
            .skill(skill_id)
            .cloned()
            .ok_or_else(|| PipelineError::UnknownSkill(skill_id.to_string()))?;
        let contract = read_contract(package_root)?;
        let mut summary = TestSummary {
            skill_id: skill_id.to_string(),
            status: entry.status,
            execution_attempts: 0,
            reports: Vec::new(),
            notes: Vec::new(),
        };
        let smoke = self.smoke(&contract);
        if wants(Layer::Execution) {
            let Some(smoke) = &smoke else {
                summary.notes.push("starter skill: no test command, execution skipped".to_string());
                return Ok(summary);
            };
            if self.execution_layer(lib, skill_id, package_root, smoke, key, cycle, &mut summary)? {
                return Ok(summary);
            }
        }
        if wants(Layer::Synthetic) && !contract.example_invocations.is_empty() {
            let attempt = lib.registry.next_attempt(skill_id, Layer::Synthetic);
            let syn = synthetic_test(&self.harness, skill_id, package_root, &contract, &BTreeMap::new(), attempt)?;
            lib.record_verification(VerificationRecord {
                skill_id: skill_id.to_string(),
                layer: Layer::Synthetic,
                outcome: syn.verdict,
                attempt,
                report_locator: syn.report_locator.clone(),
                cycle,
            })?;
            summary.reports.push(syn.report_locator.clone());
            if syn.verdict != Outcome::Pass {
                summary.notes.push(format!(
                    "synthetic {:?}: stability {:?}, gaps {:?}",
                    syn.verdict, syn.stability, syn.gaps
                ));
            }
        }
        if wants(Layer::System) && needs_scheduler(&contract) && lib.registry.skill(skill_id).is_some_and(|s| s.status.is_live()) {
            let attempt = lib.registry.next_attempt(skill_id, Layer::System);
            let adapter = SlurmAdapter::new(self.config.scheduler.clone());
            let report = match system_test(&self.harness, skill_id, package_root, &contract, smoke.as_ref(), &adapter, attempt) {
                Ok(r) => r.report,
                Err(HarnessError::Misconfigured(m)) => {
                    summary.notes.push(format!("system test: adapter misconfigured: {}", m));
                    let mut r = TestReport {
                        skill_id: skill_id.to_string(),
                        layer: Layer::System,
                        attempt,
                        command: smoke.as_ref().map(|t| t.command.clone()).unwrap_or_default(),
                        exit_status: None,
                        duration_seconds: 0.0,
                        log_digest: String::new(),
                        artifacts_digest: String::new(),
                        verdict: Outcome::Error,
                        timed_out: false,
                        note: Some(m),
                        report_locator: String::new(),
                    };
                    r.report_locator = self.harness.report_locator(skill_id, "system", attempt);
                    r
                }
                Err(e) => return Err(e.into()),
            };
            self.record_report(lib, &report, cycle)?;
            summary.reports.push(report.report_locator.clone());
        }
        summary.status = lib.registry.skill(skill_id).map(|s| s.status).unwrap_or(summary.status);
        Ok(summary)
    }

    fn skill_test(&self, state: &mut PipelineState) -> Result<(String, Vec<String>), PipelineError> {
        let mut notes = Vec::new();
        let mut d = Digester::new();
        let mut ids = state.built.clone();
        ids.sort();
        for id in ids {
            let Some(entry) = state.library.registry.skill(&id).cloned() else {
                continue;
            };
            let root = state.staging.join(&entry.package_path);
            let key = format!("c{}-{}", state.cycle_index, id);
            let summary = self.test_skill(&mut state.library, &id, &root, &key, state.cycle_index, None)?;
            d.entry(&id, serde_json::to_string(&summary).expect("summaries serialize").as_bytes());
            notes.extend(summary.notes.iter().map(|n| format!("{}: {}", id, n)));
            match summary.status {
                SkillStatus::Verified => {
                    state.verified.push(id.clone());
                    state.pending_skills.insert(id);
                }
                SkillStatus::Removed => state.removed.push(id),
                _ => {}
            }
        }
        Ok((d.finish_hex(), notes))
    }

    fn contract_for(&self, staging: Option<&Path>, entry: &SkillEntry) -> Option<SkillContract> {
        staging
            .map(|s| s.join(&entry.package_path))
            .filter(|p| p.is_dir())
            .or_else(|| Some(self.layout.join(&entry.package_path)))
            .and_then(|p| read_contract(&p).ok())
    }

    /// Searches the catalogs and adjudicates one verified skill.
    pub fn review_novelty(
        &self,
        lib: &Library,
        skill_id: &str,
        staging: Option<&Path>,
        key: Option<&str>,
    ) -> Result<NoveltyVerdict, PipelineError> {
        let entry = lib
            .registry
            .skill(skill_id)
            .cloned()
            .ok_or_else(|| PipelineError::UnknownSkill(skill_id.to_string()))?;
        let contract = self
            .contract_for(staging, &entry)
            .ok_or_else(|| PipelineError::UnknownSkill(format!("{} (package contract unreadable)", skill_id)))?;
        let candidate = entry_for(&entry, &contract, &lib.registry);
        let mut catalogs = vec![local_catalog(&lib.registry, |s| self.contract_for(staging, s))];
        catalogs.extend(self.external.iter().cloned());
        let matches = search_catalogs(&catalogs, &candidate, self.config.novelty.limit.max(1));
        let opinion = match key.filter(|_| self.config.novelty.consult_provider) {
            Some(key) => {
                let listed: Vec<String> = matches
                    .iter()
                    .map(|m| format!("{}:{} {:?}", m.catalog_id, m.entry_ref, m.overlap))
                    .collect();
                let context = ctx(&[
                    ("skill_id", skill_id.to_string()),
                    ("task_scope", contract.task_scope.clone()),
                    ("matches", listed.join("\n")),
                ]);
                let resp = self.call(StageKind::NoveltyCheck, &context, key)?;
                let p: NoveltyPayload = resp.parse().map_err(|source| PipelineError::Payload {
                    stage: StageKind::NoveltyCheck,
                    source,
                })?;
                Some(ProviderOpinion {
                    decision: p.decision,
                    rationale: p.rationale,
                })
            }
            None => None,
        };
        Ok(adjudicate(skill_id, matches, opinion.as_ref()))
    }

    /// Verdicts and placement for the skills built this cycle.
    fn settle_candidates(
        &self,
        lib: &mut Library,
        ids: &[String],
        staging: Option<&Path>,
        key_prefix: &str,
        cycle: u64,
        notes: &mut Vec<String>,
    ) -> Result<Vec<VerdictEffect>, PipelineError> {
        let mut effects = Vec::new();
        let mut ids = ids.to_vec();
        ids.sort();
        for id in ids {
            let Some(entry) = lib.registry.skill(&id).cloned() else {
                continue;
            };
            if entry.status == SkillStatus::Verified {
                let key = format!("{}-{}", key_prefix, id);
                let verdict = self.review_novelty(lib, &id, staging, Some(&key))?;
                let effect = lib.apply_verdict(&verdict, cycle)?;
                notes.push(format!("{}: {} ({})", id, verdict.decision.as_str(), verdict.rationale));
                effects.push(effect);
            } else if entry.status.is_live() {
                if let Some(leaf) = lib.place_skill(&id, cycle)? {
                    notes.push(format!("{}: placed on new leaf {}", id, leaf));
                }
            }
        }
        Ok(effects)
    }

    /// Moves packages of retired skills out of `skills/` into the graveyard.
    fn bury_retired(&self, lib: &Library, staging: Option<&Path>) -> Result<(), PipelineError> {
        for s in lib.registry.skills().filter(|s| !s.status.is_live()) {
            let grave = self.layout.graveyard_dir().join(&s.package_path);
            for src in [staging.map(|st| st.join(&s.package_path)), Some(self.layout.join(&s.package_path))]
                .into_iter()
                .flatten()
            {
                if src.is_dir() {
                    fsutil::remove_dir_if_exists(&grave)?;
                    fsutil::move_dir(&src, &grave)?;
                }
            }
        }
        Ok(())
    }

    /// Checks integrity, then writes packages, records, snapshot, indexes and
    /// the site. Nothing is written when the check fails.
    fn commit_library(
        &self,
        lock: &WriterLock,
        lib: &mut Library,
        staging: Option<&Path>,
    ) -> Result<(), PipelineError> {
        if let Some(fault) = &self.refresh_fault {
            fault(lib);
        }
        let violations = lib.integrity_check();
        if !violations.is_empty() {
            return Err(PipelineError::Integrity(violations));
        }
        if let Some(st) = staging {
            for top in [skillforge_core::ownership::SKILLS_DIR, skillforge_core::ownership::TESTS_DIR] {
                let src = st.join(top);
                if src.is_dir() {
                    for rel in fsutil::list_files(&src) {
                        fsutil::copy_file(&src.join(&rel), &self.layout.join(top).join(&rel))?;
                    }
                }
            }
        }
        self.bury_retired(lib, None)?;
        store::commit(&self.layout, lock, lib)?;
        export_site(lib, self.layout.root(), &self.layout.site_dir())?;
        Ok(())
    }

    fn refresh(&self, state: &mut PipelineState) -> Result<(String, Vec<String>), PipelineError> {
        let lock = WriterLock::acquire(&self.layout, LockMode::default())?;
        let on_disk = (registry_digest(&self.layout)?, store::read_tree(&self.layout)?.digest());
        if on_disk != state.base {
            return Err(PipelineError::ConcurrentWriter);
        }
        let cycle = state.cycle_index;
        let context = ctx(&[
            ("cycle", cycle.to_string()),
            ("created", state.created.join(", ")),
            ("verified", state.verified.join(", ")),
            ("removed", state.removed.join(", ")),
            (
                "followups",
                state
                    .followups
                    .iter()
                    .map(|f| format!("{} {}: {}", f.leaf, f.kind, f.text))
                    .collect::<Vec<_>>()
                    .join("\n"),
            ),
        ]);
        let resp = self.call(StageKind::Refresh, &context, &format!("c{}", cycle))?;
        let payload: RefreshPayload = resp.parse().map_err(|source| PipelineError::Payload {
            stage: StageKind::Refresh,
            source,
        })?;
        let mut notes = Vec::new();
        let mut lib = state.library.clone();
        let staging = state.staging.clone();
        let effects = self.settle_candidates(
            &mut lib,
            &state.built,
            Some(&staging),
            &format!("c{}", cycle),
            cycle,
            &mut notes,
        )?;
        let mut edits = Vec::new();
        for e in &effects {
            if let Some(leaf) = &e.inserted_leaf {
                edits.push(format!("insert {} for {}", leaf, e.skill_id));
            }
            if let Some(s) = &e.merged_into {
                edits.push(format!("merge {} into {}", e.skill_id, s));
            }
        }
        let proposed = state.proposed_edits.iter().map(|e| ("tree_check", e));
        let from_refresh = payload
            .tree_updates
            .iter()
            .chain(payload.registry_updates.iter())
            .map(|e| ("refresh", e));
        for (origin, edit) in proposed.chain(from_refresh) {
            match apply_edit(&mut lib, edit, cycle) {
                Ok(text) => edits.push(format!("{} [{}]", text, origin)),
                Err(err) => notes.push(format!("{} edit {:?} skipped: {}", origin, edit.op, err)),
            }
        }
        state.retired = state
            .library
            .registry
            .skills()
            .filter(|s| s.status.is_live())
            .filter(|s| lib.registry.skill(&s.id).is_some_and(|now| !now.status.is_live()))
            .map(|s| s.id.clone())
            .collect();
        self.commit_library(&lock, &mut lib, Some(&staging))?;
        state.library = lib;
        state.tree_edits = edits;
        state.pending_skills = pending_skills(&state.library.registry).into_iter().collect();
        drop(lock);
        Ok((digest_responses([&resp]), notes))
    }

    // ---- layer 2 ----------------------------------------------------------------

    fn provider_benchmark(&self, skill_id: &str, key: &str) -> Result<BenchmarkReport, HarnessError> {
        let context = ctx(&[("skill_id", skill_id.to_string())]);
        let resp = self
            .gateway
            .call(StageKind::Layer2Benchmark, &context, key)
            .map_err(|e| HarnessError::Provider(e.to_string()))?;
        let p: BenchmarkPayload = resp.parse().map_err(|e| HarnessError::Provider(e.to_string()))?;
        BenchmarkReport::from_scores(
            skill_id,
            vec![CaseScore {
                case_id: "provider".to_string(),
                with_skill_score: p.with_skill_score,
                baseline_score: p.baseline_score,
                notes: if p.notes.is_empty() { Vec::new() } else { vec![p.notes] },
            }],
            self.config.evaluation.threshold,
        )
    }

    fn benchmark_once(&self, lib: &Library, skill_id: &str, root: &Path, key: &str) -> Result<(BenchmarkReport, String), PipelineError> {
        let attempt = lib.registry.next_attempt(skill_id, Layer::Benchmark);
        let cases_file = root.join(crate::package::TESTS_DIR).join("benchmark.ndjson");
        if cases_file.is_file() {
            let cases = load_cases(&cases_file)?;
            let report = benchmark_compare(&self.harness, skill_id, root, &cases, self.config.evaluation.threshold, attempt)?;
            let locator = self.harness.report_locator(skill_id, "benchmark", attempt);
            Ok((report, locator))
        } else {
            let report = self.provider_benchmark(skill_id, key)?;
            let locator = persist_benchmark(&self.harness, &report, attempt)?;
            Ok((report, locator))
        }
    }

    fn record_benchmark(&self, lib: &mut Library, report: &BenchmarkReport, locator: String, cycle: u64) -> Result<(), PipelineError> {
        let attempt = lib.registry.next_attempt(&report.skill_id, Layer::Benchmark);
        lib.record_verification(VerificationRecord {
            skill_id: report.skill_id.clone(),
            layer: Layer::Benchmark,
            outcome: if report.weak { Outcome::Fail } else { Outcome::Pass },
            attempt,
            report_locator: locator,
            cycle,
        })?;
        Ok(())
    }

    /// Benchmarks up to `limit` pending skills, optimizing weak ones, and
    /// commits the results under the writer lock.
    pub fn evaluate_pending(&self, limit: usize) -> Result<EvaluationReport, PipelineError> {
        let lock = WriterLock::acquire(&self.layout, LockMode::default())?;
        let mut lib = open_library(&self.layout)?;
        let batch = read_evaluation_reports(&self.layout)?
            .iter()
            .map(|r| r.batch)
            .max()
            .unwrap_or(0)
            + 1;
        let cycle = next_cycle_index(&self.layout)?.saturating_sub(1);
        let mut report = EvaluationReport {
            batch,
            skills: Vec::new(),
        };
        for id in pending_skills(&lib.registry).into_iter().take(limit) {
            let entry = lib.registry.skill(&id).cloned().expect("pending skills exist");
            let root = self.layout.join(&entry.package_path);
            let key = format!("e{}-{}", batch, id);
            let (first, locator) = self.benchmark_once(&lib, &id, &root, &key)?;
            self.record_benchmark(&mut lib, &first, locator, cycle)?;
            let mut eval = SkillEvaluation {
                skill_id: id.clone(),
                margin: first.margin,
                weak: first.weak,
                status: entry.status,
                notes: Vec::new(),
            };
            if first.weak {
                let contract = read_contract(&root)?;
                let smoke = self.smoke(&contract);
                let gateway = &self.gateway;
                let mut rebenched: Vec<(BenchmarkReport, String)> = Vec::new();
                let lib_view = lib.clone();
                let outcome = optimize_loop(
                    &self.harness,
                    &id,
                    &root,
                    &first,
                    smoke.as_ref(),
                    self.config.budgets.optimize_rounds,
                    |round, last| {
                        let context = ctx(&[
                            ("skill_id", id.clone()),
                            ("round", round.to_string()),
                            ("margin", format!("{:.4}", last.margin)),
                        ]);
                        let resp = gateway
                            .call(StageKind::Layer2Optimize, &context, &key)
                            .map_err(|e| HarnessError::Provider(e.to_string()))?;
                        resp.parse::<OptimizePayload>()
                            .map_err(|e| HarnessError::Provider(e.to_string()))
                    },
                    |_round| {
                        let mut view = lib_view.clone();
                        for (r, loc) in &rebenched {
                            let _ = self.record_benchmark(&mut view, r, loc.clone(), cycle);
                        }
                        let (r, loc) = self
                            .benchmark_once(&view, &id, &root, &key)
                            .map_err(|e| HarnessError::Provider(e.to_string()))?;
                        rebenched.push((r.clone(), loc));
                        Ok(r)
                    },
                )?;
                for (r, loc) in rebenched {
                    self.record_benchmark(&mut lib, &r, loc, cycle)?;
                }
                for round in &outcome.rounds {
                    eval.notes.push(format!("round {}: {}", round.round, round.note));
                }
                eval.margin = outcome.last.margin;
                eval.weak = outcome.last.weak;
                if let OptimizeStatus::Exhausted { .. } = outcome.status {
                    lib.set_status(&id, SkillStatus::Review, cycle)?;
                }
            }
            eval.status = lib.registry.skill(&id).map(|s| s.status).unwrap_or(eval.status);
            report.skills.push(eval);
        }
        self.commit_library(&lock, &mut lib, None)?;
        append_json(&self.layout.evaluation_log(), &report)?;
        Ok(report)
    }

    // ---- design mode ------------------------------------------------------------

    /// Designs, builds, tests and reviews one skill for a task prompt, then
    /// commits it. A skill that fails validation yields a failed report.
    pub fn design_skill(&self, task_prompt: &str) -> Result<DesignReport, PipelineError> {
        if task_prompt.trim().is_empty() {
            return Err(PipelineError::EmptyPrompt);
        }
        let lock = WriterLock::acquire(&self.layout, LockMode::default())?;
        let mut lib = open_library(&self.layout)?;
        let cycle = next_cycle_index(&self.layout)?.saturating_sub(1);
        let key = format!("d-{}", &sha256_hex(task_prompt.as_bytes())[..10]);
        let resp = self.call(StageKind::DesignSkill, &ctx(&[("task_prompt", task_prompt.to_string())]), &key)?;
        let archived = self.layout.designs_dir().join(format!("{}.json", key));
        fsutil::write_atomic(&archived, resp.raw_text.as_bytes())?;
        let payload: skillforge_core::stage::DesignPayload = resp.parse().map_err(|source| PipelineError::Payload {
            stage: StageKind::DesignSkill,
            source,
        })?;
        let mut report = DesignReport {
            task_prompt: task_prompt.to_string(),
            status: DesignStatus::Failed,
            skill_id: None,
            skill_status: None,
            resources: Vec::new(),
            resource_search_skipped: !payload.needs_resources,
            verdict: None,
            response_locator: format!("designs/{}.json", key),
            notes: Vec::new(),
        };
        let leaf = match payload
            .leaf_path
            .as_deref()
            .and_then(|p| p.parse::<NodePath>().ok())
            .filter(|p| live_leaf(&lib.tree, p) || (!lib.tree.contains(p) && p.parent().is_some_and(|q| lib.tree.contains(&q))))
        {
            Some(p) => p,
            None => match prioritize_branches(&lib.tree, &lib.registry, cycle, 1).into_iter().next() {
                Some(top) => {
                    report.notes.push(format!("no usable leaf_path; placed under {}", top.path));
                    top.path
                }
                None => {
                    report.notes.push("no live leaf to place the skill".to_string());
                    return Ok(report);
                }
            },
        };
        if !lib.tree.contains(&leaf) {
            let parent = leaf.parent().expect("checked above");
            lib.insert_leaf(&parent, &LeafSpec::new(leaf.last(), cycle))?;
            report.notes.push(format!("inserted leaf {}", leaf));
        }
        if payload.needs_resources {
            let context = ctx(&[("target_leaf", leaf.to_string()), ("task_prompt", task_prompt.to_string())]);
            let r = self.call(StageKind::ResourceSearch, &context, &key)?;
            let found: ResourceSearchPayload = r.parse().map_err(|source| PipelineError::Payload {
                stage: StageKind::ResourceSearch,
                source,
            })?;
            report.resources = self.record_resources(&mut lib, &leaf, found.resources, cycle, &mut report.notes)?;
        } else {
            report.notes.push("resource_search skipped: provider reported no extra resources needed".to_string());
        }
        let mut links = payload.resources_used.clone();
        links.extend(payload.contract.provenance_links.iter().cloned());
        let provenance = map_provenance(&lib.registry, &links);
        let name = payload.name.clone().unwrap_or_else(|| payload.contract.task_scope.clone());
        if let Err(e) = check_contract(&payload.contract) {
            report.notes.push(format!("contract rejected: {}", e));
        } else if provenance.is_empty() {
            report.notes.push("no recorded provenance for the designed skill".to_string());
        } else {
            let root = self.layout.root().to_path_buf();
            let dir = package_dir(&leaf, &name, |p| root.join(p).exists() || self.layout.graveyard_dir().join(p).exists());
            let dest = self.layout.join(&dir);
            compile_package(&name, &payload.contract, &payload.artifacts, &dest)?;
            let id = lib.registry.allocate_skill_id(&leaf, &name);
            lib.registry.upsert_skill(SkillEntry {
                id: id.clone(),
                name: name.clone(),
                leaf_path: leaf.clone(),
                status: SkillStatus::Untested,
                package_path: dir,
                smoke_target: resolve_smoke_target(&payload.contract).map(|t| t.command),
                provenance,
                created_cycle: cycle,
                updated_cycle: cycle,
                confidence: confidence(&payload.contract),
            })?;
            let summary = self.test_skill(&mut lib, &id, &dest, &key, cycle, None)?;
            report.notes.extend(summary.notes.clone());
            let effects = self.settle_candidates(&mut lib, std::slice::from_ref(&id), None, &key, cycle, &mut report.notes)?;
            report.verdict = effects.first().map(|e| e.decision);
            let status = lib.registry.skill(&id).map(|s| s.status).unwrap_or(SkillStatus::Removed);
            report.status = if status == SkillStatus::Verified {
                DesignStatus::Passed
            } else {
                DesignStatus::Failed
            };
            report.skill_id = Some(id);
            report.skill_status = Some(status);
        }
        self.commit_library(&lock, &mut lib, None)?;
        fsutil::append_lines(
            &self.layout.reports_dir().join("designs.ndjson"),
            &[serde_json::to_string(&report).expect("reports serialize")],
        )?;
        Ok(report)
    }

    /// Re-runs layer-1 testing on a committed skill and commits the records.
    pub fn retest(&self, skill_id: &str, only: Option<Layer>) -> Result<TestSummary, PipelineError> {
        let lock = WriterLock::acquire(&self.layout, LockMode::default())?;
        let mut lib = open_library(&self.layout)?;
        let entry = lib
            .registry
            .skill(skill_id)
            .cloned()
            .ok_or_else(|| PipelineError::UnknownSkill(skill_id.to_string()))?;
        let cycle = next_cycle_index(&self.layout)?.saturating_sub(1);
        let key = format!("t{}-{}", cycle, skill_id);
        let summary = self.test_skill(&mut lib, skill_id, &self.layout.join(&entry.package_path), &key, cycle, only)?;
        self.commit_library(&lock, &mut lib, None)?;
        Ok(summary)
    }

    /// Library statistics plus campaign-facing counters.
    pub fn status(&self) -> Result<StatusReport, PipelineError> {
        let lib = open_library(&self.layout)?;
        let cycles = read_cycle_reports(&self.layout)?;
        Ok(StatusReport {
            stats: lib.stats()?,
            pending_skills: pending_skills(&lib.registry),
            cycles_completed: cycles.iter().filter(|r| r.is_completed()).count(),
            cycles_aborted: cycles.iter().filter(|r| !r.is_completed()).count(),
            integrity_violations: lib.integrity_check(),
        })
    }

    /// Novelty verdict for a committed skill against the current catalogs,
    /// without consulting the provider or changing anything.
    pub fn novelty_preview(&self, skill_id: &str) -> Result<NoveltyVerdict, PipelineError> {
        let lib = open_library(&self.layout)?;
        self.review_novelty(&lib, skill_id, None, None)
    }

    /// Writes the site bundle for the committed library into `dest`.
    pub fn export(&self, dest: &Path) -> Result<crate::export::SiteBundle, PipelineError> {
        let lib = open_library(&self.layout)?;
        Ok(export_site(&lib, self.layout.root(), dest)?)
    }

    /// Per-stage means over completed cycles, written to `reports/timing.json`.
    pub fn timing_report(&self) -> Result<(TimingSummary, String), PipelineError> {
        let (summary, table) = timing_summary(&logged_durations(&self.layout)?);
        let text = serde_json::to_string_pretty(&summary).expect("timing summaries serialize");
        fsutil::write_atomic(&self.layout.reports_dir().join("timing.json"), text.as_bytes())?;
        Ok((summary, table))
    }
}

/// Per-cycle stage durations from the report log, completed cycles only.
pub fn logged_durations(layout: &Layout) -> Result<Vec<Vec<StageDuration>>, PipelineError> {
    Ok(read_cycle_reports(layout)?
        .iter()
        .filter(|r| r.is_completed())
        .map(CycleReport::durations)
        .collect())
}
